//! Bellman operator, value iteration, policies and closed forms of the value function.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::model::{Bound, ConstraintMap, DPModel, ACTIVE_TOL};
use crate::error::{Error, Result};
use crate::linalg::{self, dot, Point};
use crate::measure::PATH_CAP;
use crate::nonsmooth::{self, FnExpr};

/// Values indexed `[shock][state]`.
pub type Table = Vec<Vec<f64>>;

/// Default relative tolerance for membership in the argmin.
pub const TOL_ARGMIN: f64 = 1e-8;

/// Penalty weight keeping closed-form branches inside their own constraint region.
const BRANCH_PENALTY: f64 = 1e6;

const MAX_SWEEPS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub v: Table,
    /// `v(·, ω)` as an expression in `x`, one per shock.
    pub closed_form: Vec<FnExpr>,
    pub iterations: usize,
    pub tolerance: f64,
    /// `‖v - T v‖∞` at the returned table.
    pub fixed_point_residual: f64,
    /// Largest gap between a closed form and the table on the grid.
    pub closed_form_residual: f64,
    /// False when some branch had to freeze its continuation value.
    pub closed_form_exact: bool,
}

/// Minimizers `G(x, ω)` as sorted state indices; the first is the selector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub sets: Vec<Vec<Vec<usize>>>,
    pub tol_argmin: f64,
}

impl PolicyTable {
    pub fn set(&self, w: usize, i: usize) -> &[usize] {
        &self.sets[w][i]
    }

    /// Lexicographically smallest minimizer.
    pub fn selector(&self, w: usize, i: usize) -> usize {
        self.sets[w][i][0]
    }
}

/// A model together with its value function and policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub model: DPModel,
    pub values: ValueTable,
    pub policy: PolicyTable,
}

impl Solution {
    /// Selector `g(x, ω)` as a point.
    pub fn policy_point(&self, w: usize, i: usize) -> &[f64] {
        self.model.state(self.policy.selector(w, i))
    }
}

pub fn solve(model: &DPModel, tol: f64) -> Result<Solution> {
    let values = value_iteration(model, tol)?;
    let policy = policy_multifunction(model, &values.v, TOL_ARGMIN)?;
    Ok(Solution {
        model: model.clone(),
        values,
        policy,
    })
}

fn check_table(model: &DPModel, phi: &Table) -> Result<()> {
    if phi.len() != model.shocks() || phi.iter().any(|r| r.len() != model.states().len()) {
        return Err(Error::invalid("table shape must be [shocks][states]"));
    }
    if !phi.iter().flatten().all(|v| v.is_finite()) {
        return Err(Error::Numerical("table entries must be finite".into()));
    }
    Ok(())
}

/// `Σ_ω' P(ω'|ω) φ(·, ω')` on the grid.
fn expected(model: &DPModel, phi: &Table, w: usize) -> Vec<f64> {
    let row = model.kernel().row(w);
    let mut out = vec![0.0; model.states().len()];
    for (wp, p) in row.iter().enumerate() {
        if *p != 0.0 {
            linalg::axpy(&mut out, *p, &phi[wp]);
        }
    }
    out
}

fn candidate_values(model: &DPModel, cont: &[f64], w: usize, i: usize) -> Vec<f64> {
    let beta = model.beta();
    model
        .feasible(w, i)
        .iter()
        .zip(model.costs_at(w, i))
        .map(|(&j, c)| c + beta * cont[j])
        .collect()
}

/// `(T φ)(x, ω) = min_{y ∈ Γ(x, ω)} u(x, y, ω) + β E[φ(y, ·) | ω]` over grid candidates.
pub fn bellman_operator(model: &DPModel, phi: &Table) -> Result<Table> {
    check_table(model, phi)?;
    Ok(apply(model, phi))
}

fn apply(model: &DPModel, phi: &Table) -> Table {
    (0..model.shocks())
        .map(|w| {
            let cont = expected(model, phi, w);
            (0..model.states().len())
                .map(|i| {
                    candidate_values(model, &cont, w, i)
                        .into_iter()
                        .fold(f64::INFINITY, f64::min)
                })
                .collect()
        })
        .collect()
}

fn sup_dist(a: &Table, b: &Table) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Iterate from `v ≡ 0` until `β/(1-β) ‖v_{k+1} - v_k‖∞ <= tol`.
pub fn value_iteration(model: &DPModel, tol: f64) -> Result<ValueTable> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let beta = model.beta();
    let mut v: Table = vec![vec![0.0; model.states().len()]; model.shocks()];
    let mut iterations = 0;
    loop {
        let next = apply(model, &v);
        iterations += 1;
        if !next.iter().flatten().all(|x| x.is_finite()) {
            return Err(Error::Numerical("value iteration produced non-finite values".into()));
        }
        let step = sup_dist(&next, &v);
        v = next;
        if beta == 0.0 || beta / (1.0 - beta) * step <= tol {
            break;
        }
        if iterations >= MAX_SWEEPS {
            return Err(Error::Numerical("value iteration did not reach the tolerance".into()));
        }
    }
    let fixed_point_residual = sup_dist(&apply(model, &v), &v);
    let policy = policy_multifunction(model, &v, TOL_ARGMIN)?;
    let (closed_form, closed_form_exact) = closed_forms(model, &v, &policy)?;
    let mut closed_form_residual = 0.0f64;
    for (w, f) in closed_form.iter().enumerate() {
        for (i, x) in model.states().iter().enumerate() {
            closed_form_residual = closed_form_residual.max((f.eval(x) - v[w][i]).abs());
        }
    }
    Ok(ValueTable {
        v,
        closed_form,
        iterations,
        tolerance: tol,
        fixed_point_residual,
        closed_form_residual,
        closed_form_exact,
    })
}

/// All grid candidates within `tol_argmin·(1 + |min|)` of the Bellman minimum.
pub fn policy_multifunction(model: &DPModel, v: &Table, tol_argmin: f64) -> Result<PolicyTable> {
    check_table(model, v)?;
    if !(tol_argmin >= 0.0) {
        return Err(Error::invalid("argmin tolerance must be nonnegative"));
    }
    let states = model.states();
    let sets = (0..model.shocks())
        .map(|w| {
            let cont = expected(model, v, w);
            (0..states.len())
                .map(|i| {
                    let vals = candidate_values(model, &cont, w, i);
                    let best = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                    let cut = best + tol_argmin * (1.0 + best.abs());
                    let mut set: Vec<usize> = model
                        .feasible(w, i)
                        .iter()
                        .zip(&vals)
                        .filter(|(_, q)| **q <= cut)
                        .map(|(&j, _)| j)
                        .collect();
                    set.sort_by(|&a, &b| lex(&states[a], &states[b]));
                    set
                })
                .collect()
        })
        .collect();
    Ok(PolicyTable { sets, tol_argmin })
}

fn lex(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Optimal cost of the problem truncated after `t` stages, by backward
/// induction over every shock history.
pub fn finite_horizon_oracle(model: &DPModel, t: usize, x: &[f64], w: usize) -> Result<f64> {
    let i = model.require_state(x)?;
    Ok(finite_horizon_table(model, t, w)?[i])
}

/// [`finite_horizon_oracle`] at every grid state.
pub fn finite_horizon_table(model: &DPModel, t: usize, w: usize) -> Result<Vec<f64>> {
    model.require_shock(w)?;
    if t == 0 {
        return Err(Error::invalid("horizon must be at least one stage"));
    }
    let paths = (model.shocks() as u128).checked_pow(t as u32 - 1).unwrap_or(u128::MAX);
    if paths > PATH_CAP {
        return Err(Error::Capacity {
            what: "shock histories",
            needed: paths,
            cap: PATH_CAP,
            advice: "shorten the horizon or merge shocks",
        });
    }
    Ok(horizon(model, t, w))
}

fn horizon(model: &DPModel, remaining: usize, w: usize) -> Vec<f64> {
    let ns = model.states().len();
    let mut cont = vec![0.0; ns];
    if remaining > 1 {
        for (wp, p) in model.kernel().row(w).iter().enumerate() {
            let child = horizon(model, remaining - 1, wp);
            linalg::axpy(&mut cont, *p, &child);
        }
    }
    (0..ns)
        .map(|i| {
            candidate_values(model, &cont, w, i)
                .into_iter()
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Piecewise-linear interpolant of grid values as a hinge sum, extended linearly.
fn interpolant_1d(xs: &[f64], ys: &[f64]) -> Result<FnExpr> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    if idx.len() == 1 {
        return Ok(FnExpr::constant(1, ys[idx[0]]));
    }
    let s: Vec<f64> = idx.iter().map(|&k| xs[k]).collect();
    let f: Vec<f64> = idx.iter().map(|&k| ys[k]).collect();
    let slope: Vec<f64> = (0..s.len() - 1)
        .map(|k| (f[k + 1] - f[k]) / (s[k + 1] - s[k]))
        .collect();
    let mut terms = vec![FnExpr::affine(vec![slope[0]], f[0] - slope[0] * s[0])];
    for k in 1..slope.len() {
        let jump = slope[k] - slope[k - 1];
        if jump == 0.0 {
            continue;
        }
        let hinge = FnExpr::max(vec![
            FnExpr::affine(vec![1.0], -s[k]),
            FnExpr::constant(1, 0.0),
        ])?;
        let scaled = FnExpr::scale(jump.abs(), hinge)?;
        terms.push(if jump > 0.0 { scaled } else { FnExpr::neg(scaled) });
    }
    FnExpr::sum(terms)
}

fn smooth_gradient(f: &FnExpr, z: &[f64]) -> Result<Point> {
    nonsmooth::strict_derivative(f, z)?
        .ok_or_else(|| Error::Internal("smooth constraint without a gradient".into()))
}

/// `Γ`-branch through `(x_k, y_k)`: the next state follows the active
/// state-dependent constraints to first order, `y(x) = y_k + J (x - x_k)`.
struct Branch {
    jac: Vec<Point>,
    penalties: Vec<FnExpr>,
}

fn branch(model: &DPModel, i: usize, j: usize) -> Result<Branch> {
    let n = model.dim();
    let (xk, yk) = (model.state(i), model.state(j));
    let mut jac = vec![vec![0.0; n]; n];
    let mut limits: Vec<(Point, f64)> = Vec::new(); // (a, b): a·x + b <= 0 along the branch, before J
    match model.constraint() {
        ConstraintMap::Finite { .. } => {}
        ConstraintMap::Box { lower, upper } => {
            for (bound, sign) in [(lower, -1.0), (upper, 1.0)] {
                let at = bound.at(xk);
                for d in 0..n {
                    let active = (yk[d] - at[d]).abs() <= 1e-9 * (1.0 + at[d].abs());
                    let moving = bound.moves_with_state();
                    if active && moving {
                        jac[d][d] = 1.0;
                    } else {
                        // sign·(y_d - bound_d(x)) <= 0, recorded in terms of x and y_d
                        let mut a = vec![0.0; 2 * n];
                        a[n + d] = sign;
                        let mut b = 0.0;
                        match bound {
                            Bound::Const(c) => b -= sign * c[d],
                            Bound::StatePlus(o) => {
                                a[d] = -sign;
                                b -= sign * o[d];
                            }
                        }
                        limits.push((a, b));
                    }
                }
            }
        }
        ConstraintMap::Nlp { ineq, eq } => {
            let z = model.pair(i, j);
            let mut rows_x: Vec<Point> = Vec::new();
            let mut rows_y: Vec<Point> = Vec::new();
            for f in eq.iter().chain(ineq.iter().filter(|f| f.eval(&z).abs() <= ACTIVE_TOL)) {
                let g = smooth_gradient(f, &z)?;
                rows_x.push(g[..n].to_vec());
                rows_y.push(g[n..].to_vec());
            }
            if rows_x.iter().any(|r| linalg::norm_inf(r) > 0.0) {
                let gy = linalg::to_dmatrix(&rows_y, n);
                for c in 0..n {
                    let rhs = DVector::from_iterator(rows_x.len(), rows_x.iter().map(|r| -r[c]));
                    let (col, _) = linalg::least_squares(&gy, &rhs)
                        .ok_or_else(|| Error::Numerical("branch sensitivity solve failed".into()))?;
                    for d in 0..n {
                        jac[d][c] = col[d];
                    }
                }
            }
        }
    }
    let (rows, c) = branch_map(&jac, xk, yk);
    let mut penalties = Vec::new();
    for (a, b) in limits {
        let g = FnExpr::affine(a, b).compose_affine(&rows, &c)?;
        if let FnExpr::Affine { a, b } = &g {
            if linalg::norm_inf(a) == 0.0 && *b <= 0.0 {
                continue;
            }
        }
        penalties.push(g);
    }
    if let ConstraintMap::Nlp { ineq, .. } = model.constraint() {
        let z = model.pair(i, j);
        for f in ineq.iter().filter(|f| f.eval(&z).abs() > ACTIVE_TOL) {
            penalties.push(f.compose_affine(&rows, &c)?);
        }
    }
    let penalties = penalties
        .into_iter()
        .map(|g| {
            let n = g.dim();
            FnExpr::scale(BRANCH_PENALTY, FnExpr::max(vec![g, FnExpr::constant(n, 0.0)])?)
        })
        .collect::<Result<_>>()?;
    Ok(Branch { jac, penalties })
}

/// `x -> (x, y_k + J (x - x_k))` as composition rows and offset.
fn branch_map(jac: &[Point], xk: &[f64], yk: &[f64]) -> (Vec<Point>, Point) {
    let n = xk.len();
    let mut rows: Vec<Point> = (0..n)
        .map(|d| (0..n).map(|e| if d == e { 1.0 } else { 0.0 }).collect())
        .collect();
    rows.extend(jac.iter().cloned());
    let mut c = vec![0.0; n];
    c.extend((0..n).map(|d| yk[d] - dot(&jac[d], xk)));
    (rows, c)
}

fn closed_forms(model: &DPModel, v: &Table, policy: &PolicyTable) -> Result<(Vec<FnExpr>, bool)> {
    let n = model.dim();
    let beta = model.beta();
    let mut exact = true;
    let mut out = Vec::with_capacity(model.shocks());
    for w in 0..model.shocks() {
        let cont = expected(model, v, w);
        let mut branches: Vec<FnExpr> = Vec::new();
        let mut push = |f: FnExpr| {
            if !branches.contains(&f) {
                branches.push(f);
            }
        };
        if model.constraint_independent_of_state() {
            for &j in model.feasible(w, 0) {
                push(FnExpr::sum(vec![
                    model.cost(w).freeze_second(model.state(j))?,
                    FnExpr::constant(n, beta * cont[j]),
                ])?);
            }
        } else {
            let interp = if n == 1 && beta > 0.0 {
                let xs: Vec<f64> = model.states().iter().map(|p| p[0]).collect();
                Some(interpolant_1d(&xs, &cont)?)
            } else {
                None
            };
            for i in 0..model.states().len() {
                for &j in policy.set(w, i) {
                    let b = branch(model, i, j)?;
                    let (rows, c) = branch_map(&b.jac, model.state(i), model.state(j));
                    let mut terms = vec![model.cost(w).compose_affine(&rows, &c)?];
                    let moves = b.jac.iter().any(|r| linalg::norm_inf(r) > 0.0);
                    if beta > 0.0 {
                        match (&interp, moves) {
                            (_, false) => terms.push(FnExpr::constant(n, beta * cont[j])),
                            (Some(f), true) => terms.push(FnExpr::scale(
                                beta,
                                f.compose_affine(&rows[n..], &c[n..])?,
                            )?),
                            (None, true) => {
                                exact = false;
                                terms.push(FnExpr::constant(n, beta * cont[j]));
                            }
                        }
                    }
                    terms.extend(b.penalties);
                    push(FnExpr::sum(terms)?);
                }
            }
        }
        out.push(if branches.len() == 1 {
            branches.pop().unwrap()
        } else {
            FnExpr::min(branches)?
        });
    }
    Ok((out, exact))
}
