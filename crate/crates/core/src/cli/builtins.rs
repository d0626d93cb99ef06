//! Bundled scenario catalogue.

use serde::Serialize;

use crate::convexgeom::SetRep;
use crate::measure::MeasureSpace;
use crate::nonsmooth::FnExpr;
use crate::setintegral::{Integrand, SetValuedMap};

use super::scenario::{
    DpCheck, DpInputs, EulerInputs, Family, GeometryInputs, IntegralInputs, Kind, LeibnizInputs,
    LyapunovInputs, ModelRef, NlpInputs, Scenario, Shape, Tolerances,
};

fn scenario(name: &str, kind: Kind, description: &str, inputs: impl Serialize) -> Scenario {
    Scenario {
        name: name.to_string(),
        kind,
        description: Some(description.to_string()),
        inputs: serde_json::to_value(inputs).expect("builtin inputs serialize"),
        tolerances: Tolerances::default(),
        seed: None,
        refinement: Vec::new(),
        strict: false,
    }
}

fn pts(p: &[&[f64]]) -> SetRep {
    SetRep::points(p.iter().map(|v| v.to_vec()).collect()).expect("builtin point set")
}

fn poly(p: &[&[f64]]) -> SetRep {
    SetRep::polytope(p.iter().map(|v| v.to_vec()).collect()).expect("builtin polytope")
}

fn measure(atoms: &[f64], weights: &[f64]) -> MeasureSpace {
    MeasureSpace::discrete(atoms, weights).expect("builtin measure")
}

fn integrand(atoms: Vec<FnExpr>) -> Integrand {
    Integrand::new(atoms).expect("builtin integrand")
}

fn dyadic() -> Vec<usize> {
    vec![1, 2, 4, 8, 16, 32, 64]
}

fn dp(model: &str, x: &[f64], expect_value: Option<f64>, checks: Vec<DpCheck>) -> DpInputs {
    DpInputs {
        model: ModelRef::desk(model),
        x: x.to_vec(),
        w: 0,
        vi_tol: 1e-10,
        expect_value,
        checks,
    }
}

fn euler(model: &str, x: &[f64], w: usize) -> EulerInputs {
    EulerInputs {
        model: ModelRef::desk(model),
        x: x.to_vec(),
        w,
        vi_tol: 1e-10,
        cone_radius: None,
        perturb: None,
        min_perturbed_residual: 0.1,
        limiting: false,
    }
}

fn nlp(model: &str, expect_mfcq: bool, expect_multipliers: Option<Vec<Vec<f64>>>) -> NlpInputs {
    NlpInputs {
        model: ModelRef::desk(model),
        x: vec![0.0],
        w: 0,
        vi_tol: 1e-10,
        expect_mfcq,
        expect_multipliers,
    }
}

/// Every bundled scenario, sorted by name.
pub fn all() -> Vec<Scenario> {
    let neg_abs = FnExpr::neg(FnExpr::abs_shifted(0.0));
    let mut v = vec![
        scenario(
            "aumann-supremum",
            Kind::Integral,
            "support of the selector integral is the weighted sum of atom supports [supremum representation]",
            IntegralInputs {
                map: SetValuedMap::new(vec![
                    pts(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]),
                    poly(&[&[-1.0, -1.0], &[1.0, -1.0], &[1.0, 1.0], &[-1.0, 1.0]]),
                    pts(&[&[0.5, -0.5], &[-0.5, 0.5]]),
                ])
                .expect("builtin map"),
                measure: measure(&[0.0, 0.5, 1.0], &[0.2, 0.3, 0.5]),
            },
        ),
        {
            let mut s = scenario(
                "bellman-finite-horizon",
                Kind::Dp,
                "finite-horizon values approach the fixed point at rate beta^T on a two-shock model [Bellman fixed point]",
                dp("euler-two-shock", &[0.0], None, vec![DpCheck::FixedPoint, DpCheck::FiniteHorizon]),
            );
            s.refinement = (1..=8).collect();
            s
        },
        scenario(
            "bellman-unit-cost",
            Kind::Dp,
            "u = 1 + y with beta = 0.5 has value identically 2 [Bellman fixed point]",
            dp("unit-cost", &[0.0], Some(2.0), vec![DpCheck::FixedPoint, DpCheck::FiniteHorizon]),
        ),
        scenario(
            "clarke-leibniz-regular",
            Kind::Leibniz,
            "convex atoms |x - t|: the Clarke Leibniz inclusion is an equality [Clarke Leibniz rule, equality case]",
            LeibnizInputs {
                integrand: Some(integrand(vec![
                    FnExpr::abs_shifted(-0.5),
                    FnExpr::abs_shifted(0.0),
                    FnExpr::abs_shifted(0.5),
                ])),
                measure: Some(measure(&[-0.5, 0.0, 0.5], &[0.25, 0.5, 0.25])),
                x: vec![0.0],
                expect_clarke: Some(poly(&[&[-0.5], &[0.5]])),
                ..Default::default()
            },
        ),
        scenario(
            "clarke-leibniz-strict",
            Kind::Leibniz,
            "atoms |x| and -|x| cancel: the Clarke Leibniz inclusion is strict [Clarke Leibniz rule, strict inclusion]",
            LeibnizInputs {
                integrand: Some(integrand(vec![FnExpr::abs_shifted(0.0), neg_abs.clone()])),
                measure: Some(measure(&[0.0, 1.0], &[0.5, 0.5])),
                x: vec![0.0],
                expect_limiting: Some(pts(&[&[0.0]])),
                min_gap: Some(0.05),
                ..Default::default()
            },
        ),
        {
            let mut s = scenario(
                "envelope-quadratic",
                Kind::Dp,
                "u = (x - a)^2 + y^2: the value gradient is 2(x - a) [envelope theorem]",
                dp(
                    "quadratic-envelope",
                    &[0.5],
                    Some(0.04),
                    vec![DpCheck::FixedPoint, DpCheck::Envelope, DpCheck::StrictDerivative],
                ),
            );
            s.tolerances.value = 1e-8;
            s
        },
        scenario(
            "envelope-viability-violation",
            Kind::Dp,
            "G(x) = {y >= x}, u = y violates lower viability and the envelope inclusion fails [envelope theorem, negative control]",
            dp("state-floor-box", &[0.0], None, vec![DpCheck::Envelope]),
        ),
        {
            let mut e = euler("euler-concave-kink", &[0.0], 1);
            e.limiting = true;
            scenario(
                "euler-concave-kink",
                Kind::Euler,
                "concave kink in x: raw set-integral residual dominates the convexified one [limiting Euler inclusion]",
                e,
            )
        },
        scenario(
            "euler-plane",
            Kind::Euler,
            "planar quadratic tracking model, optimum (0.5, -0.25) [stochastic Euler inclusion]",
            euler("euler-plane", &[0.0, 0.0], 0),
        ),
        {
            let mut e = euler("euler-two-shock", &[0.0], 0);
            e.perturb = Some(vec![0.25]);
            scenario(
                "euler-quadratic",
                Kind::Euler,
                "two-shock quadratic model: residual vanishes at the optimum and not at a perturbed control [stochastic Euler inclusion residual check]",
                e,
            )
        },
        scenario(
            "euler-single",
            Kind::Euler,
            "one-shock quadratic tracking model, optimum 0.5 [stochastic Euler inclusion]",
            euler("euler-single", &[0.0], 0),
        ),
        scenario(
            "geometry-hull",
            Kind::Geometry,
            "{0, 1} against [0, 1]: Hausdorff distance 1/2, exact supports of sums [support functions]",
            GeometryInputs {
                a: pts(&[&[0.0], &[1.0]]),
                b: poly(&[&[0.0], &[1.0]]),
                expect_hausdorff: Some(0.5),
            },
        ),
        {
            let mut s = scenario(
                "limiting-leibniz-neg-abs",
                Kind::Leibniz,
                "atoms -|x - t| on [-1, 1]: limiting subdifferential against raw and convexified integrals [limiting Leibniz rule]",
                LeibnizInputs {
                    family: Some(Family {
                        shape: Shape::NegAbs,
                        interval: [-1.0, 1.0],
                    }),
                    x: vec![0.0],
                    ..Default::default()
                },
            );
            s.refinement = vec![1, 2, 3, 4, 5, 8, 9, 16, 17];
            s
        },
        {
            let mut s = scenario(
                "lyapunov-01",
                Kind::Lyapunov,
                "Gamma = {0, 1} on N uniform atoms: Hausdorff gap 1/(2N) [Lyapunov convexification]",
                LyapunovInputs {
                    set: pts(&[&[0.0], &[1.0]]),
                    interval: [0.0, 1.0],
                    expected_gap_coeff: Some(0.5),
                },
            );
            s.refinement = dyadic();
            s
        },
        {
            let mut s = scenario(
                "lyapunov-square",
                Kind::Lyapunov,
                "Gamma = corners of the unit square: Hausdorff gap sqrt(2)/(2N) [Lyapunov convexification]",
                LyapunovInputs {
                    set: pts(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]),
                    interval: [0.0, 1.0],
                    expected_gap_coeff: Some(std::f64::consts::FRAC_1_SQRT_2),
                },
            );
            s.refinement = vec![1, 2, 4, 8, 16];
            s
        },
        {
            let mut s = scenario(
                "neg-abs",
                Kind::Leibniz,
                "-|x| at 0: limiting subdifferential {-1, 1}, Clarke gradient [-1, 1] [nonconvex subdifferential example]",
                LeibnizInputs {
                    integrand: Some(integrand(vec![neg_abs])),
                    measure: Some(measure(&[0.0], &[1.0])),
                    x: vec![0.0],
                    expect_limiting: Some(pts(&[&[-1.0], &[1.0]])),
                    expect_clarke: Some(poly(&[&[-1.0], &[1.0]])),
                    oracle: true,
                    ..Default::default()
                },
            );
            s.seed = Some(7);
            s
        },
        scenario(
            "nlp-rank-deficient",
            Kind::Nlp,
            "duplicated equality y = x: MFCQ fails [multiplier formula, negative control]",
            nlp("duplicated-equality-nlp", false, None),
        ),
        scenario(
            "nlp-state-floor",
            Kind::Nlp,
            "u = y subject to x - y <= 0: multipliers {1}, value gradient 1 [multiplier formula for the value subdifferential]",
            nlp("state-floor-nlp", true, Some(vec![vec![1.0]])),
        ),
        scenario(
            "strict-leibniz-smooth",
            Kind::Leibniz,
            "smooth quadratic atoms: weighted gradient sum is the strict derivative [strict Leibniz rule]",
            LeibnizInputs {
                integrand: Some(integrand(vec![
                    FnExpr::quadratic(vec![vec![2.0, 0.5], vec![0.5, 1.0]], vec![1.0, -1.0], 0.0)
                        .expect("builtin quadratic"),
                    FnExpr::quadratic(vec![vec![1.0, 0.0], vec![0.0, 3.0]], vec![0.0, 2.0], 1.0)
                        .expect("builtin quadratic"),
                    FnExpr::affine(vec![0.5, 0.25], -1.0),
                ])),
                measure: Some(measure(&[0.0, 0.5, 1.0], &[0.5, 0.25, 0.25])),
                x: vec![0.3, -0.2],
                ..Default::default()
            },
        ),
    ];
    v.sort_by(|a, b| a.name.cmp(&b.name));
    v
}

pub fn find(name: &str) -> Option<Scenario> {
    all().into_iter().find(|s| s.name == name)
}

/// One line per builtin: name, kind, description.
pub fn list_builtins() -> String {
    let mut out = String::new();
    for s in all() {
        let kind = serde_json::to_value(s.kind).expect("kind serializes");
        out.push_str(&format!(
            "{:<30} {:<9} {}\n",
            s.name,
            kind.as_str().unwrap_or_default(),
            s.description.as_deref().unwrap_or_default()
        ));
    }
    out
}
