//! Constraint qualification and Lagrange multipliers for NLP-form constraint maps.

use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use super::bellman::Solution;
use super::model::{ConstraintMap, DPModel, ACTIVE_TOL};
use super::sensitivity::{default_radius, value_function_subdiff, SubdiffKind};
use crate::convexgeom::{hausdorff_distance, Direction, SetRep};
use crate::error::{Error, Result};
use crate::linalg::{self, Point};
use crate::nonsmooth::{self, oracle, FnExpr};
use crate::report::Report;

const RANK_TOL: f64 = 1e-10;
const SLACK_TOL: f64 = 1e-10;
const SUBSET_CAP_LOG2: usize = 16;
const STATIONARITY_TOL: f64 = 1e-8;
/// Largest grid ratio `‖g(x) - g(x̄)‖ / ‖x - x̄‖` accepted as an upper Lipschitz selector.
pub const SELECTOR_LIP_CAP: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mfcq {
    pub holds: bool,
    /// Equality gradients are linearly independent.
    pub rank_ok: bool,
    /// Optimal slack of the strict-feasibility LP.
    pub slack: f64,
    /// Direction in `(x, y)` space certifying the qualification.
    pub xi: Point,
    pub active_ineq: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Multiplier {
    /// Inequality multipliers first, then equality multipliers.
    pub lambda: Point,
    /// Inequalities allowed a nonzero multiplier in this basic solution.
    pub support: Vec<usize>,
    pub stationarity_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierSet {
    pub multipliers: Vec<Multiplier>,
    pub active_ineq: Vec<usize>,
}

fn nlp_parts(model: &DPModel) -> Result<(&[FnExpr], &[FnExpr])> {
    match model.constraint() {
        ConstraintMap::Nlp { ineq, eq } => Ok((ineq, eq)),
        _ => Err(Error::Inapplicable("constraint map is not in NLP form".into())),
    }
}

fn joint(x: &[f64], y: &[f64]) -> Point {
    x.iter().chain(y).cloned().collect()
}

fn gradient(f: &FnExpr, z: &[f64]) -> Result<Point> {
    nonsmooth::strict_derivative(f, z)?
        .ok_or_else(|| Error::Internal("smooth constraint without a gradient".into()))
}

fn active_set(ineq: &[FnExpr], z: &[f64]) -> Vec<usize> {
    (0..ineq.len())
        .filter(|&i| ineq[i].eval(z).abs() <= ACTIVE_TOL)
        .collect()
}

/// `y`-gradients of active inequalities (`false`) and equalities (`true` = two-sided).
pub(crate) fn active_y_gradients(model: &DPModel, x: &[f64], y: &[f64]) -> Result<Vec<(Point, bool)>> {
    let (ineq, eq) = nlp_parts(model)?;
    let z = joint(x, y);
    let n = x.len();
    let mut out = Vec::new();
    for i in active_set(ineq, &z) {
        out.push((gradient(&ineq[i], &z)?[n..].to_vec(), false));
    }
    for f in eq {
        out.push((gradient(f, &z)?[n..].to_vec(), true));
    }
    Ok(out)
}

/// Rank test on equality gradients and the strict-feasibility LP
/// `max s` s.t. `⟨∇ψ_j, ξ⟩ = 0`, `⟨∇φ_i, ξ⟩ + s <= 0` (active `i`), `‖ξ‖∞ <= 1`.
pub fn mfcq_check(model: &DPModel, x: &[f64], y: &[f64]) -> Result<Mfcq> {
    let (ineq, eq) = nlp_parts(model)?;
    Error::check_dim(model.dim(), x.len())?;
    Error::check_dim(model.dim(), y.len())?;
    let z = joint(x, y);
    let nz = z.len();
    let eq_grads: Vec<Point> = eq.iter().map(|f| gradient(f, &z)).collect::<Result<_>>()?;
    let rank_ok = linalg::rank(&eq_grads, nz, RANK_TOL) == eq_grads.len();
    let active = active_set(ineq, &z);
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let xi: Vec<_> = (0..nz).map(|_| lp.add_var(0.0, (-1.0, 1.0))).collect();
    let s = lp.add_var(1.0, (-1.0, 1.0));
    for g in &eq_grads {
        let mut e = LinearExpr::empty();
        for (k, v) in xi.iter().enumerate() {
            e.add(*v, g[k]);
        }
        lp.add_constraint(e, ComparisonOp::Eq, 0.0);
    }
    for &i in &active {
        let g = gradient(&ineq[i], &z)?;
        let mut e = LinearExpr::empty();
        for (k, v) in xi.iter().enumerate() {
            e.add(*v, g[k]);
        }
        e.add(s, 1.0);
        lp.add_constraint(e, ComparisonOp::Le, 0.0);
    }
    let sol = lp
        .solve()
        .map_err(|e| Error::Numerical(format!("MFCQ linear program failed: {e}")))?;
    let slack = sol[s];
    let xi_val: Point = xi.iter().map(|v| sol[*v]).collect();
    Ok(Mfcq {
        holds: rank_ok && slack > SLACK_TOL,
        rank_ok,
        slack,
        xi: xi_val,
        active_ineq: active,
    })
}

/// `∇_y u(x̄, ȳ, ω) + β Σ P(ω'|ω) ∇v(ȳ, ω')`, requiring strict derivatives of `v`.
fn objective_y_gradient(sol: &Solution, x: &[f64], y: &[f64], w: usize) -> Result<Point> {
    let model = &sol.model;
    let mut g = nonsmooth::strict_derivative(&model.cost(w).freeze_first(x)?, y)?
        .ok_or_else(|| Error::Inapplicable("u(x̄, ·, ω) is not strictly differentiable at ȳ".into()))?;
    let beta = model.beta();
    if beta > 0.0 {
        for (wp, p) in model.kernel().row(w).iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            let dv = nonsmooth::strict_derivative(&sol.values.closed_form[wp], y)?.ok_or_else(|| {
                Error::Inapplicable(format!("v(·, {wp}) is not strictly differentiable at ȳ"))
            })?;
            linalg::axpy(&mut g, beta * p, &dv);
        }
    }
    Ok(g)
}

/// Vertices of the multiplier set, one per linearly independent active subset.
pub fn lagrange_multiplier_set(sol: &Solution, x: &[f64], y: &[f64], w: usize) -> Result<MultiplierSet> {
    let model = &sol.model;
    model.require_shock(w)?;
    let (ineq, eq) = nlp_parts(model)?;
    let mfcq = mfcq_check(model, x, y)?;
    if !mfcq.holds {
        return Err(Error::Inapplicable("MFCQ fails; the multiplier set may be unbounded".into()));
    }
    let g0 = objective_y_gradient(sol, x, y, w)?;
    let z = joint(x, y);
    let n = model.dim();
    let active = mfcq.active_ineq.clone();
    if active.len() > SUBSET_CAP_LOG2 {
        return Err(Error::Capacity {
            what: "active-set subsets",
            needed: 1u128 << active.len(),
            cap: 1u128 << SUBSET_CAP_LOG2,
            advice: "simplify the constraint system",
        });
    }
    let ineq_y: Vec<Point> = active
        .iter()
        .map(|&i| Ok(gradient(&ineq[i], &z)?[n..].to_vec()))
        .collect::<Result<_>>()?;
    let eq_y: Vec<Point> = eq
        .iter()
        .map(|f| Ok(gradient(f, &z)?[n..].to_vec()))
        .collect::<Result<_>>()?;
    let rhs = nalgebra::DVector::from_iterator(n, g0.iter().map(|v| -v));
    let mut out: Vec<Multiplier> = Vec::new();
    for mask in 0u32..(1u32 << active.len()) {
        let subset: Vec<usize> = (0..active.len()).filter(|k| mask >> k & 1 == 1).collect();
        let cols: Vec<&Point> = subset.iter().map(|&k| &ineq_y[k]).chain(eq_y.iter()).collect();
        let col_rows: Vec<Point> = cols.iter().map(|c| c.to_vec()).collect();
        if linalg::rank(&col_rows, n, RANK_TOL) < cols.len() {
            continue;
        }
        let a = nalgebra::DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r]);
        let Some((sol_v, res)) = linalg::least_squares(&a, &rhs) else {
            continue;
        };
        if res > STATIONARITY_TOL || subset.iter().enumerate().any(|(k, _)| sol_v[k] < -1e-10) {
            continue;
        }
        let mut lambda = vec![0.0; ineq.len() + eq.len()];
        for (k, &s) in subset.iter().enumerate() {
            lambda[active[s]] = sol_v[k].max(0.0);
        }
        for e in 0..eq.len() {
            lambda[ineq.len() + e] = sol_v[subset.len() + e];
        }
        if out.iter().any(|m| linalg::dist(&m.lambda, &lambda) <= 1e-9) {
            continue;
        }
        out.push(Multiplier {
            lambda,
            support: subset.iter().map(|&s| active[s]).collect(),
            stationarity_residual: res,
        });
    }
    if out.is_empty() {
        return Err(Error::Internal(
            "no multiplier found although MFCQ holds; the grid minimizer is not stationary".into(),
        ));
    }
    Ok(MultiplierSet {
        multipliers: out,
        active_ineq: active,
    })
}

/// Limiting subgradients of `v(·, ω)` against `∇_x u + Σ λ_i ∇_x φ_i` over the multiplier set.
pub fn nlp_value_subdiff_check(sol: &Solution, x: &[f64], w: usize, dirs: &[Direction]) -> Result<Report> {
    let model = &sol.model;
    model.require_shock(w)?;
    let (ineq, eq) = nlp_parts(model)?;
    let i0 = model.require_state(x)?;
    let y = sol.policy_point(w, i0).to_vec();
    let mut rep = Report::new("nlp_value_subdiff");
    let mfcq = mfcq_check(model, x, &y)?;
    rep.hypothesis("mfcq", mfcq.holds);
    rep.extra("mfcq", &mfcq);
    if !mfcq.holds {
        rep.fail("MFCQ fails at (x̄, ȳ)");
        return Ok(rep);
    }
    let lambdas = match lagrange_multiplier_set(sol, x, &y, w) {
        Ok(l) => l,
        Err(Error::Inapplicable(why)) => {
            rep.hypothesis("strictly_differentiable_objective", false);
            rep.fail(why);
            return Ok(rep);
        }
        Err(e) => return Err(e),
    };
    rep.hypothesis("strictly_differentiable_objective", true);
    let z = joint(x, &y);
    let n = model.dim();
    let gx_u = gradient_x(model.cost(w), &z, n)?;
    let cons: Vec<Point> = ineq
        .iter()
        .chain(eq)
        .map(|f| Ok(gradient(f, &z)?[..n].to_vec()))
        .collect::<Result<_>>()?;
    let images: Vec<Point> = lambdas
        .multipliers
        .iter()
        .map(|m| {
            let mut p = gx_u.clone();
            for (l, g) in m.lambda.iter().zip(&cons) {
                linalg::axpy(&mut p, *l, g);
            }
            p
        })
        .collect();
    let rhs = SetRep::polytope(images)?;
    let lhs = value_function_subdiff(sol, w, x, SubdiffKind::Limiting)?;
    if !lhs.exact {
        rep.warn("value-function subdifferential is an outer estimate");
    }
    for v in lhs.set.vertices() {
        rep.residual(rhs.distance_to(v)?, 1e-6);
    }
    let f = &sol.values.closed_form[w];
    let fd = oracle::central_gradient(|p| f.eval(p), x, 1e-6);
    let fd_gap = rhs.distance_to(&fd)?;
    if nonsmooth::strict_derivative(f, x)?.is_some() && fd_gap > 1e-4 {
        rep.fail(format!("finite-difference gradient {fd:?} is {fd_gap:e} from the formula"));
    }
    // upper Lipschitz behaviour of the selector near x̄
    let radius = default_radius(model);
    let mut ratio = 0.0f64;
    for i in 0..model.states().len() {
        let d = linalg::dist(model.state(i), x);
        if i != i0 && d <= radius + 1e-12 {
            ratio = ratio.max(linalg::dist(sol.policy_point(w, i), &y) / d);
        }
    }
    let lipschitz_selector = ratio <= SELECTOR_LIP_CAP;
    rep.hypothesis("upper_lipschitz_selector", lipschitz_selector);
    if lipschitz_selector {
        let gap = hausdorff_distance(&lhs.set, &rhs, dirs)?;
        rep.extra("two_sided_gap", gap);
        if gap > 1e-6 {
            rep.fail(format!("equality case: Hausdorff gap {gap:e}"));
        }
    }
    rep.extra("selector_ratio", ratio);
    rep.extra("finite_difference", &fd);
    rep.extra("multipliers", &lambdas);
    rep.extra("lhs", &lhs.set);
    rep.extra("rhs", &rhs);
    Ok(rep)
}

fn gradient_x(f: &FnExpr, z: &[f64], n: usize) -> Result<Point> {
    let g = nonsmooth::strict_derivative(f, z)?.ok_or_else(|| {
        Error::Inapplicable("u is not strictly differentiable at (x̄, ȳ)".into())
    })?;
    Ok(g[..n].to_vec())
}
