//! Small reference models with known solutions.

use super::model::{grid_1d, grid_2d, Bound, ConstraintMap, DPModel};
use crate::measure::StochasticKernel;
use crate::nonsmooth::FnExpr;

/// `k‖y - m‖² + c‖x‖²` on `R^n x R^n`.
pub fn tracking_cost(m: &[f64], k: f64, c: f64) -> FnExpr {
    let n = m.len();
    let mut q = vec![vec![0.0; 2 * n]; 2 * n];
    let mut a = vec![0.0; 2 * n];
    for d in 0..n {
        q[d][d] = 2.0 * c;
        q[n + d][n + d] = 2.0 * k;
        a[n + d] = -2.0 * k * m[d];
    }
    let b = k * m.iter().map(|v| v * v).sum::<f64>();
    FnExpr::quadratic(q, a, b).expect("square diagonal matrix")
}

fn unit_box(n: usize) -> ConstraintMap {
    ConstraintMap::Box {
        lower: Bound::Const(vec![-1.0; n]),
        upper: Bound::Const(vec![1.0; n]),
    }
}

fn uniform_kernel(k: usize) -> StochasticKernel {
    StochasticKernel::new(vec![vec![1.0 / k as f64; k]; k]).expect("uniform rows")
}

fn build(states: Vec<Vec<f64>>, kernel: StochasticKernel, beta: f64, costs: Vec<FnExpr>, c: ConstraintMap) -> DPModel {
    DPModel::new(states, kernel, beta, costs, c).expect("reference model is valid")
}

/// `u = 1 + y` on `y ∈ {0, 1}`, `β = 0.5`: `v ≡ 2`, policy `y = 0`.
pub fn unit_cost() -> DPModel {
    build(
        grid_1d(0.0, 1.0, 2),
        StochasticKernel::identity(1),
        0.5,
        vec![FnExpr::affine(vec![0.0, 1.0], 1.0)],
        ConstraintMap::all_states(2, 1),
    )
}

/// `u = (x - a)² + y²` on `[-1, 1]` with `β = 0`: `v(x) = (x - a)²`.
pub fn quadratic_envelope(a: f64) -> DPModel {
    let u = FnExpr::quadratic(vec![vec![2.0, 0.0], vec![0.0, 2.0]], vec![-2.0 * a, 0.0], a * a)
        .expect("2x2 matrix");
    build(grid_1d(-1.0, 1.0, 9), StochasticKernel::identity(1), 0.0, vec![u], unit_box(1))
}

/// `u = y` with `y >= x` as a box moving with the state: `v(x) = x`.
pub fn state_floor_box() -> DPModel {
    build(
        grid_1d(-1.0, 1.0, 9),
        StochasticKernel::identity(1),
        0.0,
        vec![FnExpr::affine(vec![0.0, 1.0], 0.0)],
        ConstraintMap::Box {
            lower: Bound::StatePlus(vec![0.0]),
            upper: Bound::Const(vec![1.0]),
        },
    )
}

fn floor_nlp(ineq: Vec<FnExpr>, eq: Vec<FnExpr>) -> DPModel {
    build(
        grid_1d(-1.0, 1.0, 9),
        StochasticKernel::identity(1),
        0.0,
        vec![FnExpr::affine(vec![0.0, 1.0], 0.0)],
        ConstraintMap::Nlp { ineq, eq },
    )
}

/// `u = y` subject to `x - y <= 0`.
pub fn state_floor_nlp() -> DPModel {
    floor_nlp(vec![FnExpr::affine(vec![1.0, -1.0], 0.0)], vec![])
}

/// The floor written twice: multipliers form a segment.
pub fn doubled_floor_nlp() -> DPModel {
    let f = FnExpr::affine(vec![1.0, -1.0], 0.0);
    floor_nlp(vec![f.clone(), f], vec![])
}

/// `y = x` written twice: equality gradients are dependent.
pub fn duplicated_equality_nlp() -> DPModel {
    let e = FnExpr::affine(vec![-1.0, 1.0], 0.0);
    floor_nlp(vec![], vec![e.clone(), e])
}

/// `(y - 0.6)² + 0.4x²`, `β = 0.5`: optimum `y = 0.5`.
pub fn euler_single() -> DPModel {
    build(
        grid_1d(-1.0, 1.0, 9),
        StochasticKernel::identity(1),
        0.5,
        vec![tracking_cost(&[0.6], 1.0, 0.4)],
        unit_box(1),
    )
}

/// Two equally likely shocks with targets `(0.6, -0.3)` and weights `(0.2, 0.6)`:
/// optimum `y = (0.5, -0.25)`.
pub fn euler_two_shock() -> DPModel {
    build(
        grid_1d(-1.0, 1.0, 9),
        uniform_kernel(2),
        0.5,
        vec![tracking_cost(&[0.6], 1.0, 0.2), tracking_cost(&[-0.3], 1.0, 0.6)],
        unit_box(1),
    )
}

/// Planar version of [`euler_single`] with target `(0.6, -0.3)`: optimum `(0.5, -0.25)`.
pub fn euler_plane() -> DPModel {
    build(
        grid_2d(-1.0, 1.0, 9),
        StochasticKernel::identity(1),
        0.5,
        vec![tracking_cost(&[0.6, -0.3], 1.0, 0.4)],
        unit_box(2),
    )
}

/// `4y² - c_ω|x|` with `c = (0.4, 0.8)`: the grid optimum sits on the concave kink at 0.
pub fn euler_concave_kink() -> DPModel {
    let cost = |c: f64| {
        let abs_x = FnExpr::max(vec![
            FnExpr::affine(vec![1.0, 0.0], 0.0),
            FnExpr::affine(vec![-1.0, 0.0], 0.0),
        ])
        .expect("two branches");
        FnExpr::sum(vec![
            tracking_cost(&[0.0], 4.0, 0.0),
            FnExpr::neg(FnExpr::scale(c, abs_x).expect("positive weight")),
        ])
        .expect("two terms")
    };
    build(grid_1d(-1.0, 1.0, 9), uniform_kernel(2), 0.5, vec![cost(0.4), cost(0.8)], unit_box(1))
}

/// Every reference model, by name.
pub fn all() -> Vec<(&'static str, DPModel)> {
    vec![
        ("unit-cost", unit_cost()),
        ("quadratic-envelope", quadratic_envelope(0.3)),
        ("state-floor-box", state_floor_box()),
        ("state-floor-nlp", state_floor_nlp()),
        ("euler-single", euler_single()),
        ("euler-two-shock", euler_two_shock()),
        ("euler-plane", euler_plane()),
        ("euler-concave-kink", euler_concave_kink()),
    ]
}

/// Look up a reference model, including the negative controls left out of [`all`].
pub fn by_name(name: &str) -> Option<DPModel> {
    match name {
        "doubled-floor-nlp" => Some(doubled_floor_nlp()),
        "duplicated-equality-nlp" => Some(duplicated_equality_nlp()),
        _ => all().into_iter().find(|(n, _)| *n == name).map(|(_, m)| m),
    }
}

pub fn names() -> Vec<&'static str> {
    let mut v: Vec<&'static str> = all().into_iter().map(|(n, _)| n).collect();
    v.extend(["doubled-floor-nlp", "duplicated-equality-nlp"]);
    v
}
