//! Envelope, strict-derivative and Euler checks for a solved model.

use serde::{Deserialize, Serialize};

use super::bellman::{PolicyTable, Solution};
use super::model::{ConstraintMap, DPModel};
use super::nlp;
use crate::convexgeom::{hausdorff_distance, normal_cone_box, Direction, SetRep};
use crate::error::{Error, Result};
use crate::linalg::{self, Point};
use crate::measure::MeasureSpace;
use crate::nonsmooth::{self, oracle, SubdiffResult};
use crate::report::Report;
use crate::setintegral::{aumann_integral, wstar_integral, SetValuedMap};

/// Inclusion tolerance for value-function checks.
pub const ENVELOPE_TOL: f64 = 1e-8;
/// Residual below which an Euler inclusion counts as satisfied.
pub const EULER_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-6;
const FD_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubdiffKind {
    Clarke,
    Limiting,
}

/// Subdifferential of the closed form of `v(·, ω)` at `x`.
pub fn value_function_subdiff(
    sol: &Solution,
    w: usize,
    x: &[f64],
    kind: SubdiffKind,
) -> Result<SubdiffResult> {
    sol.model.require_shock(w)?;
    let a = nonsmooth::analyze(&sol.values.closed_form[w], x)?;
    let mut r = match kind {
        SubdiffKind::Clarke => a.clarke,
        SubdiffKind::Limiting => a.limiting,
    };
    r.exact &= sol.values.closed_form_exact;
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Viability {
    pub lower: bool,
    pub upper: bool,
    /// Upper viability held because `Γ(·, ω)` does not depend on the state.
    pub upper_automatic: bool,
    /// Grid version of inner semicontinuity of `G` at `(x̄, ȳ)`.
    pub inner_semicontinuous: bool,
}

/// Neighbourhood radius used when none is given: just over one grid step.
pub fn default_radius(model: &DPModel) -> f64 {
    1.5 * model.grid_spacing()
}

fn neighbourhood(model: &DPModel, i0: usize, radius: f64) -> Vec<usize> {
    let x0 = model.state(i0);
    (0..model.states().len())
        .filter(|&i| linalg::dist(model.state(i), x0) <= radius + 1e-12)
        .collect()
}

/// Lower and upper viability of `G` relative to `Γ` on grid points near `x̄`.
pub fn check_viability(
    model: &DPModel,
    policy: &PolicyTable,
    x: &[f64],
    w: usize,
    radius: f64,
) -> Result<Viability> {
    model.require_shock(w)?;
    let i0 = model.require_state(x)?;
    let near = neighbourhood(model, i0, radius);
    let automatic = model.constraint_independent_of_state();
    let mut lower = true;
    let mut upper = true;
    for &a in &near {
        for &b in &near {
            let g = policy.set(w, a);
            lower &= g.iter().any(|&j| model.is_feasible(w, b, j));
            upper &= g.iter().all(|&j| model.is_feasible(w, b, j));
        }
    }
    let y0 = model.state(policy.selector(w, i0));
    let inner = near.iter().all(|&a| {
        policy
            .set(w, a)
            .iter()
            .any(|&j| linalg::dist(model.state(j), y0) <= radius + 1e-12)
    });
    Ok(Viability {
        lower,
        upper: automatic || upper,
        upper_automatic: automatic,
        inner_semicontinuous: inner,
    })
}

fn add_viability(rep: &mut Report, v: &Viability) {
    rep.hypothesis("lower_viable", v.lower);
    rep.hypothesis("upper_viable", v.upper);
    rep.hypothesis("inner_semicontinuous_grid", v.inner_semicontinuous);
    rep.extra("viability", v);
}

/// Clarke gradient of `v(·, ω)` at `x̄` inside that of `u(·, ȳ, ω)`, plus a
/// grid Lipschitz estimate of `v` against the modulus of `u`.
pub fn envelope_check(sol: &Solution, x: &[f64], w: usize, dirs: &[Direction]) -> Result<Report> {
    let model = &sol.model;
    model.require_shock(w)?;
    let i0 = model.require_state(x)?;
    let y = sol.policy_point(w, i0).to_vec();
    let lhs = value_function_subdiff(sol, w, x, SubdiffKind::Clarke)?;
    let u_x = model.cost(w).freeze_second(&y)?;
    let rhs = nonsmooth::clarke_gradient(&u_x, x, false)?;
    let mut rep = Report::new("envelope");
    let radius = default_radius(model);
    add_viability(&mut rep, &check_viability(model, &sol.policy, x, w, radius)?);
    rep.hypothesis("u_regular", rhs.regular);
    rep.hypothesis("closed_form_exact", lhs.exact && rhs.exact);
    for h in dirs {
        let l = lhs.set.support(h)?;
        let r = rhs.set.support(h)?;
        rep.residual((l - r).max(0.0), ENVELOPE_TOL);
    }
    // local Lipschitz estimate from grid differences
    let (lo, hi) = model.grid_box();
    let lo2: Point = lo.iter().chain(&lo).cloned().collect();
    let hi2: Point = hi.iter().chain(&hi).cloned().collect();
    let bound = model.cost(w).lipschitz_modulus(&lo2, &hi2)?;
    let near = neighbourhood(model, i0, radius);
    let mut slope = 0.0f64;
    for &a in &near {
        for &b in &near {
            if a != b {
                let dv = (sol.values.v[w][a] - sol.values.v[w][b]).abs();
                slope = slope.max(dv / linalg::dist(model.state(a), model.state(b)));
            }
        }
    }
    if slope > bound + 1e-6 {
        rep.fail(format!("grid slope {slope:e} exceeds the Lipschitz modulus {bound:e} of u"));
    }
    rep.extra("grid_slope", slope);
    rep.extra("lipschitz_bound", bound);
    rep.extra("y_bar", &y);
    rep.extra("lhs", &lhs.set);
    rep.extra("rhs", &rhs.set);
    Ok(rep)
}

/// Strict derivative of `v(·, ω)` against `∇_x u(x̄, ȳ, ω)` and finite differences.
pub fn strict_value_derivative_check(sol: &Solution, x: &[f64], w: usize) -> Result<Report> {
    let model = &sol.model;
    model.require_shock(w)?;
    let i0 = model.require_state(x)?;
    let mut rep = Report::new("strict_value_derivative");
    let mut grads: Vec<Point> = Vec::new();
    for &j in sol.policy.set(w, i0) {
        let u_x = model.cost(w).freeze_second(model.state(j))?;
        match nonsmooth::strict_derivative(&u_x, x)? {
            Some(g) => grads.push(g),
            None => {
                rep.hypothesis("u_strictly_differentiable", false);
                rep.fail("inapplicable: u(·, ȳ, ω) has no strict derivative at the point");
                rep.extra("verdict", "inapplicable");
                return Ok(rep);
            }
        }
    }
    rep.hypothesis("u_strictly_differentiable", true);
    let unique = grads.iter().all(|g| linalg::dist(g, &grads[0]) <= 1e-12);
    rep.hypothesis("policy_gradients_agree", unique);
    if !unique {
        rep.fail("inapplicable: tied minimizers with different x-gradients");
        rep.extra("verdict", "inapplicable");
        return Ok(rep);
    }
    let expect = &grads[0];
    let f = &sol.values.closed_form[w];
    match nonsmooth::strict_derivative(f, x)? {
        Some(d) => rep.residual(linalg::norm_inf(&linalg::sub(&d, expect)), ENVELOPE_TOL),
        None => rep.fail("closed form of v is not strictly differentiable at the point"),
    }
    let fd = oracle::central_gradient(|z| f.eval(z), x, FD_STEP);
    let fd_gap = linalg::norm_inf(&linalg::sub(&fd, expect));
    if fd_gap > FD_TOL * (1.0 + linalg::norm_inf(expect)) {
        rep.fail(format!("finite differences differ by {fd_gap:e}"));
    }
    rep.extra("gradient", expect);
    rep.extra("finite_difference", &fd);
    rep.extra("verdict", if rep.pass { "pass" } else { "fail" });
    Ok(rep)
}

/// Normal cone to `Γ(x, ω)` at `y`, truncated at `radius`.
pub fn normal_cone(model: &DPModel, x: &[f64], y: &[f64], radius: f64) -> Result<SetRep> {
    match model.constraint() {
        ConstraintMap::Finite { .. } => Ok(SetRep::origin(model.dim())),
        ConstraintMap::Box { lower, upper } => {
            normal_cone_box(&lower.at(x), &upper.at(x), y, radius)
        }
        ConstraintMap::Nlp { .. } => {
            let m = nlp::mfcq_check(model, x, y)?;
            if !m.holds {
                return Err(Error::Inapplicable(
                    "normal cone of the NLP constraint set needs MFCQ; see mfcq_check".into(),
                ));
            }
            let n = model.dim();
            let mut gens = vec![vec![0.0; n]];
            for (g, two_sided) in nlp::active_y_gradients(model, x, y)? {
                let len = linalg::norm(&g);
                if len > 0.0 {
                    gens.push(linalg::scaled(&g, radius / len));
                    if two_sided {
                        gens.push(linalg::scaled(&g, -radius / len));
                    }
                }
            }
            SetRep::polytope(gens)
        }
    }
}

/// Transition row `P(·|ω)` as a measure over shock labels.
pub(crate) fn transition_measure(model: &DPModel, w: usize) -> Result<MeasureSpace> {
    let row = model.kernel().row(w).to_vec();
    MeasureSpace::new((0..row.len()).map(|k| vec![k as f64]).collect(), row)
}

/// Distance from the origin to the Clarke form of the stochastic Euler inclusion at `ȳ = g(x̄, ω)`.
pub fn euler_inclusion_residual(sol: &Solution, x: &[f64], w: usize, cone_radius: f64) -> Result<f64> {
    let i0 = sol.model.require_state(x)?;
    sol.model.require_shock(w)?;
    let y = sol.policy_point(w, i0).to_vec();
    euler_residual_at(sol, x, &y, w, cone_radius)
}

/// As [`euler_inclusion_residual`] at a caller-chosen grid point `ȳ`.
pub fn euler_residual_at(sol: &Solution, x: &[f64], y: &[f64], w: usize, cone_radius: f64) -> Result<f64> {
    let parts = euler_parts(sol, x, y, w, cone_radius, SubdiffKind::Clarke)?;
    let rhs = parts
        .dy
        .convexify()
        .minkowski_sum(&wstar_integral(&parts.atoms, &parts.measure)?.scale(sol.model.beta()))?
        .minkowski_sum(&parts.cone)?;
    rhs.distance_to(&vec![0.0; x.len()])
}

struct EulerParts {
    dy: SetRep,
    atoms: SetValuedMap,
    measure: MeasureSpace,
    cone: SetRep,
    exact: bool,
}

fn euler_parts(
    sol: &Solution,
    x: &[f64],
    y: &[f64],
    w: usize,
    cone_radius: f64,
    kind: SubdiffKind,
) -> Result<EulerParts> {
    let model = &sol.model;
    model.require_shock(w)?;
    model.require_state(x)?;
    let jy = model.require_state(y)?;
    let pick = |a: nonsmooth::Analysis| match kind {
        SubdiffKind::Clarke => a.clarke,
        SubdiffKind::Limiting => a.limiting,
    };
    let dy = pick(nonsmooth::analyze(&model.cost(w).freeze_first(x)?, y)?);
    let mut exact = dy.exact;
    let mut sets = Vec::with_capacity(model.shocks());
    for wp in 0..model.shocks() {
        let next = sol.policy_point(wp, jy);
        let r = pick(nonsmooth::analyze(&model.cost(wp).freeze_second(next)?, y)?);
        exact &= r.exact;
        sets.push(r.set);
    }
    Ok(EulerParts {
        dy: dy.set,
        atoms: SetValuedMap::new(sets)?,
        measure: transition_measure(model, w)?,
        cone: normal_cone(model, x, y, cone_radius)?,
        exact,
    })
}

/// Limiting form of the Euler inclusion with the unconvexified selector
/// integral, next to its convexification.
pub fn limiting_euler_check(
    sol: &Solution,
    x: &[f64],
    w: usize,
    dirs: &[Direction],
    cone_radius: f64,
) -> Result<Report> {
    let model = &sol.model;
    let i0 = model.require_state(x)?;
    model.require_shock(w)?;
    let y = sol.policy_point(w, i0).to_vec();
    let parts = euler_parts(sol, x, &y, w, cone_radius, SubdiffKind::Limiting)?;
    let beta = model.beta();
    let zero = vec![0.0; x.len()];
    let mut rep = Report::new("limiting_euler");
    if !parts.exact {
        rep.warn("some limiting subdifferential is an outer estimate");
    }
    let raw_integral = aumann_integral(&parts.atoms, &parts.measure)?;
    let raw = parts
        .dy
        .minkowski_sum(&raw_integral.scale(beta))?
        .minkowski_sum(&parts.cone)?;
    let convex = parts
        .dy
        .convexify()
        .minkowski_sum(&wstar_integral(&parts.atoms, &parts.measure)?.scale(beta))?
        .minkowski_sum(&parts.cone)?;
    let raw_res = raw.distance_to(&zero)?;
    let conv_res = convex.distance_to(&zero)?;
    rep.residual(conv_res, EULER_TOL);
    if raw_res + 1e-12 < conv_res {
        rep.fail("unconvexified residual below the convexified one");
    }
    // the same inclusion written with limiting subgradients of v at ȳ
    let jy = model.require_state(&y)?;
    let mut v_sets = Vec::with_capacity(model.shocks());
    for wp in 0..model.shocks() {
        v_sets.push(value_function_subdiff(sol, wp, model.state(jy), SubdiffKind::Limiting)?.set);
    }
    let v_raw = parts
        .dy
        .minkowski_sum(&aumann_integral(&SetValuedMap::new(v_sets)?, &parts.measure)?.scale(beta))?
        .minkowski_sum(&parts.cone)?;
    let x_part = nonsmooth::limiting_subdiff(&model.cost(w).freeze_second(&y)?, x, false)?;
    rep.extra("raw_residual", raw_res);
    rep.extra("convexified_residual", conv_res);
    rep.extra("value_form_residual", v_raw.distance_to(&zero)?);
    rep.extra("convexification_gap", hausdorff_distance(&raw, &convex, dirs)?);
    rep.extra("x_star_candidates", &x_part.set);
    rep.extra("y_bar", &y);
    Ok(rep)
}
