use proptest::prelude::*;

use subdiff::convexgeom::{default_directions, Direction, SetRep};
use subdiff::dp::{bellman_operator, desk, DPModel};
use subdiff::measure::MeasureSpace;
use subdiff::nonsmooth::{self, oracle, FnExpr};
use subdiff::setintegral::{aumann_integral, integral_functional, wstar_integral, Integrand, SetValuedMap};

fn affine(dim: usize) -> impl Strategy<Value = FnExpr> {
    (prop::collection::vec(-3i32..=3, dim), prop::sample::select(vec![0.0, 0.0, 0.5, -0.5]))
        .prop_map(|(a, b)| FnExpr::affine(a.into_iter().map(f64::from).collect(), b))
}

/// Max/min trees of affine pieces with frequent ties at the origin.
fn piecewise(dim: usize) -> impl Strategy<Value = FnExpr> {
    let leaf = affine(dim);
    leaf.prop_recursive(2, 8, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..=3).prop_map(|v| FnExpr::max(v).unwrap()),
            prop::collection::vec(inner.clone(), 2..=3).prop_map(|v| FnExpr::min(v).unwrap()),
            inner.clone().prop_map(FnExpr::neg),
            prop::collection::vec(inner, 2).prop_map(|v| FnExpr::sum(v).unwrap()),
        ]
    })
}

fn smooth(dim: usize) -> impl Strategy<Value = FnExpr> {
    (
        prop::collection::vec(-2.0f64..2.0, dim * dim),
        prop::collection::vec(-2.0f64..2.0, dim),
        -1.0f64..1.0,
    )
        .prop_map(move |(q, a, b)| {
            // symmetrize so the gradient is Qx + a
            let m: Vec<Vec<f64>> = (0..dim)
                .map(|i| (0..dim).map(|j| 0.5 * (q[i * dim + j] + q[j * dim + i])).collect())
                .collect();
            FnExpr::quadratic(m, a, b).unwrap()
        })
}

fn model() -> DPModel {
    desk::euler_two_shock()
}

fn table(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, n), 2)
}

fn sup_dist(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_quotients_stay_below_clarke_derivative(f in piecewise(2), seed in any::<u64>()) {
        let x = [0.0, 0.0];
        let r = 1e-3;
        let slack = 1e-6 + f.lipschitz_modulus(&[-2.0, -2.0], &[2.0, 2.0]).unwrap() * r;
        for h in default_directions(2, 8, seed) {
            let sampled = oracle::sampled_clarke_dd(&f, &x, &h, r, 300, seed).unwrap();
            let exact = nonsmooth::clarke_dd(&f, &x, &h, false).unwrap();
            prop_assert!(sampled <= exact + slack, "{sampled} > {exact} + {slack}");
        }
    }

    #[test]
    fn strict_derivative_matches_finite_differences(f in smooth(2), x in prop::collection::vec(-1.0f64..1.0, 2)) {
        let d = nonsmooth::strict_derivative(&f, &x).unwrap().expect("quadratics are smooth");
        let fd = oracle::central_gradient(|z| f.eval(z), &x, 1e-5);
        for (a, b) in d.iter().zip(&fd) {
            prop_assert!((a - b).abs() <= 1e-4 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn regular_verdicts_are_sound(f in piecewise(1)) {
        let a = nonsmooth::analyze(&f, &[0.0]).unwrap();
        if a.clarke.exact && a.clarke.regular {
            for s in [1.0, -1.0] {
                let h = Direction::new(vec![s]).unwrap();
                let one_sided = nonsmooth::directional_derivative(&f, &[0.0], &h).unwrap();
                let clarke = nonsmooth::clarke_dd(&f, &[0.0], &h, false).unwrap();
                prop_assert!((one_sided - clarke).abs() <= 1e-9, "{one_sided} vs {clarke}");
            }
        }
    }

    #[test]
    fn clarke_derivative_is_positively_homogeneous(f in piecewise(2), c in 0.1f64..10.0, seed in any::<u64>()) {
        for h in default_directions(2, 4, seed) {
            let scaled = Direction::new(h.as_slice().iter().map(|v| v * c).collect()).unwrap();
            let a = nonsmooth::clarke_dd(&f, &[0.0, 0.0], &scaled, false).unwrap();
            let b = c * nonsmooth::clarke_dd(&f, &[0.0, 0.0], &h, false).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn bellman_operator_contracts(p in table(9), q in table(9)) {
        let m = model();
        let tp = bellman_operator(&m, &p).unwrap();
        let tq = bellman_operator(&m, &q).unwrap();
        prop_assert!(sup_dist(&tp, &tq) <= m.beta() * sup_dist(&p, &q) + 1e-12);
    }

    #[test]
    fn bellman_operator_is_monotone(p in table(9), bump in table(9)) {
        let m = model();
        let q: Vec<Vec<f64>> = p.iter().zip(&bump)
            .map(|(r, s)| r.iter().zip(s).map(|(a, b)| a + b.abs()).collect())
            .collect();
        let tp = bellman_operator(&m, &p).unwrap();
        let tq = bellman_operator(&m, &q).unwrap();
        for (a, b) in tp.iter().flatten().zip(tq.iter().flatten()) {
            prop_assert!(a <= &(b + 1e-12));
        }
    }

    #[test]
    fn bellman_operator_shifts_constants(p in table(9), c in -10.0f64..10.0) {
        let m = model();
        let shifted: Vec<Vec<f64>> = p.iter().map(|r| r.iter().map(|v| v + c).collect()).collect();
        let tp = bellman_operator(&m, &p).unwrap();
        let ts = bellman_operator(&m, &shifted).unwrap();
        for (a, b) in tp.iter().flatten().zip(ts.iter().flatten()) {
            prop_assert!((b - a - m.beta() * c).abs() <= 1e-9);
        }
    }

    #[test]
    fn integral_functional_is_linear_in_the_integrand(
        f in prop::collection::vec(smooth(1), 3),
        g in prop::collection::vec(piecewise(1), 3),
        a in 0.0f64..3.0,
        x in -2.0f64..2.0,
    ) {
        let m = MeasureSpace::discrete(&[0.0, 0.5, 1.0], &[0.2, 0.3, 0.5]).unwrap();
        let combined: Vec<FnExpr> = f.iter().zip(&g)
            .map(|(p, q)| FnExpr::sum(vec![FnExpr::scale(a, p.clone()).unwrap(), q.clone()]).unwrap())
            .collect();
        let lhs = integral_functional(&Integrand::new(combined).unwrap(), &m).unwrap().eval(&[x]);
        let fi = integral_functional(&Integrand::new(f).unwrap(), &m).unwrap().eval(&[x]);
        let gi = integral_functional(&Integrand::new(g).unwrap(), &m).unwrap().eval(&[x]);
        prop_assert!((lhs - (a * fi + gi)).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn selector_integral_lies_in_the_support_integral(
        pts in prop::collection::vec(prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 1..4), 1..4),
    ) {
        let n = pts.len();
        let sets: Vec<SetRep> = pts.into_iter().map(|p| SetRep::points(p).unwrap()).collect();
        let m = MeasureSpace::discrete(&vec![0.0; n], &vec![1.0 / n as f64; n]).unwrap();
        let gamma = SetValuedMap::new(sets).unwrap();
        let a = aumann_integral(&gamma, &m).unwrap();
        let w = wstar_integral(&gamma, &m).unwrap();
        for v in a.vertices() {
            prop_assert!(w.contains(v, 1e-9).unwrap());
        }
        for h in default_directions(2, 16, 1) {
            prop_assert!((a.support(&h).unwrap() - w.support(&h).unwrap()).abs() <= 1e-9);
        }
    }
}
