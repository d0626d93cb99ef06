//! Discounted stochastic control problems on a finite state grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Point};
use crate::measure::StochasticKernel;
use crate::nonsmooth::FnExpr;

/// Feasibility slack for constraint tests on grid candidates.
pub const FEAS_TOL: f64 = 1e-10;
/// Inequalities within this distance of zero count as active.
pub const ACTIVE_TOL: f64 = 1e-8;

/// One side of a box constraint on the next state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// A fixed vector.
    Const(Point),
    /// `x + offset`, moving with the current state.
    StatePlus(Point),
}

impl Bound {
    pub fn at(&self, x: &[f64]) -> Point {
        match self {
            Bound::Const(c) => c.clone(),
            Bound::StatePlus(o) => linalg::add(x, o),
        }
    }

    pub fn moves_with_state(&self) -> bool {
        matches!(self, Bound::StatePlus(_))
    }

    fn len(&self) -> usize {
        match self {
            Bound::Const(v) | Bound::StatePlus(v) => v.len(),
        }
    }
}

/// Feasible next states `Γ(x, ω)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintMap {
    /// Explicit candidate lists: `candidates[ω][i]` holds state indices.
    Finite { candidates: Vec<Vec<Vec<usize>>> },
    Box { lower: Bound, upper: Bound },
    /// Smooth constraints `φ_i(x, y) <= 0` and `ψ_j(x, y) = 0`, shared by all shocks.
    Nlp {
        #[serde(default)]
        ineq: Vec<FnExpr>,
        #[serde(default)]
        eq: Vec<FnExpr>,
    },
}

impl ConstraintMap {
    /// Every grid state is a candidate everywhere.
    pub fn all_states(states: usize, shocks: usize) -> ConstraintMap {
        ConstraintMap::Finite {
            candidates: vec![vec![(0..states).collect(); states]; shocks],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum StatesJson {
    Scalars(Vec<f64>),
    Points(Vec<Point>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ModelJson {
    states: StatesJson,
    kernel: StochasticKernel,
    beta: f64,
    costs: Vec<FnExpr>,
    constraint: ConstraintMap,
}

/// A finite-grid instance of the infinite-horizon problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelJson", into = "ModelJson")]
pub struct DPModel {
    states: Vec<Point>,
    kernel: StochasticKernel,
    beta: f64,
    costs: Vec<FnExpr>,
    constraint: ConstraintMap,
    // derived: feasible[ω][i] lists state indices, cost[ω][i][k] matches it
    feasible: Vec<Vec<Vec<usize>>>,
    cost: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<ModelJson> for DPModel {
    type Error = Error;
    fn try_from(j: ModelJson) -> Result<Self> {
        let states = match j.states {
            StatesJson::Scalars(v) => v.into_iter().map(|t| vec![t]).collect(),
            StatesJson::Points(p) => p,
        };
        DPModel::new(states, j.kernel, j.beta, j.costs, j.constraint)
    }
}

impl From<DPModel> for ModelJson {
    fn from(m: DPModel) -> Self {
        let states = if m.dim() == 1 {
            StatesJson::Scalars(m.states.iter().map(|p| p[0]).collect())
        } else {
            StatesJson::Points(m.states)
        };
        ModelJson {
            states,
            kernel: m.kernel,
            beta: m.beta,
            costs: m.costs,
            constraint: m.constraint,
        }
    }
}

impl DPModel {
    pub fn new(
        states: Vec<Point>,
        kernel: StochasticKernel,
        beta: f64,
        costs: Vec<FnExpr>,
        constraint: ConstraintMap,
    ) -> Result<Self> {
        let n = states.first().map(|p| p.len()).unwrap_or(0);
        if n == 0 {
            return Err(Error::invalid("the state grid needs at least one point of positive dimension"));
        }
        for p in &states {
            Error::check_dim(n, p.len())?;
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::invalid("state coordinates must be finite"));
            }
        }
        for (i, p) in states.iter().enumerate() {
            if states[..i].iter().any(|q| linalg::dist(p, q) <= 1e-12) {
                return Err(Error::invalid(format!("state {i} duplicates an earlier state")));
            }
        }
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::invalid(format!("discount {beta} must lie in [0, 1)")));
        }
        if costs.len() != kernel.states() {
            return Err(Error::invalid(format!(
                "{} cost expressions for {} shocks",
                costs.len(),
                kernel.states()
            )));
        }
        for c in &costs {
            Error::check_dim(2 * n, c.validate()?)?;
        }
        validate_constraint(&constraint, n, states.len(), kernel.states())?;
        let mut model = DPModel {
            states,
            kernel,
            beta,
            costs,
            constraint,
            feasible: Vec::new(),
            cost: Vec::new(),
        };
        model.prepare()?;
        Ok(model)
    }

    fn prepare(&mut self) -> Result<()> {
        let (ns, nw) = (self.states.len(), self.shocks());
        let mut feasible = vec![vec![Vec::new(); ns]; nw];
        let mut cost = vec![vec![Vec::new(); ns]; nw];
        for w in 0..nw {
            for i in 0..ns {
                let list: Vec<usize> = match &self.constraint {
                    ConstraintMap::Finite { candidates } => candidates[w][i].clone(),
                    _ => (0..ns)
                        .filter(|&j| self.admits(&self.states[i], &self.states[j]))
                        .collect(),
                };
                if list.is_empty() {
                    return Err(Error::invalid(format!(
                        "no feasible grid candidate at state {i}, shock {w}"
                    )));
                }
                let mut row = Vec::with_capacity(list.len());
                for &j in &list {
                    let val = self.costs[w].eval(&self.pair(i, j));
                    if !val.is_finite() {
                        return Err(Error::Numerical(format!(
                            "cost is not finite at state {i}, candidate {j}, shock {w}"
                        )));
                    }
                    row.push(val);
                }
                feasible[w][i] = list;
                cost[w][i] = row;
            }
        }
        self.feasible = feasible;
        self.cost = cost;
        Ok(())
    }

    pub fn states(&self) -> &[Point] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i]
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn shocks(&self) -> usize {
        self.kernel.states()
    }

    pub fn kernel(&self) -> &StochasticKernel {
        &self.kernel
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn cost(&self, w: usize) -> &FnExpr {
        &self.costs[w]
    }

    pub fn constraint(&self) -> &ConstraintMap {
        &self.constraint
    }

    /// Grid candidates feasible at `(state i, shock w)`.
    pub fn feasible(&self, w: usize, i: usize) -> &[usize] {
        &self.feasible[w][i]
    }

    /// Costs aligned with [`DPModel::feasible`].
    pub(crate) fn costs_at(&self, w: usize, i: usize) -> &[f64] {
        &self.cost[w][i]
    }

    /// The concatenated point `(x_i, y_j)`.
    pub fn pair(&self, i: usize, j: usize) -> Point {
        let mut z = self.states[i].clone();
        z.extend_from_slice(&self.states[j]);
        z
    }

    pub fn state_index(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        self.states.iter().position(|p| linalg::dist(p, x) <= 1e-9)
    }

    pub(crate) fn require_state(&self, x: &[f64]) -> Result<usize> {
        Error::check_dim(self.dim(), x.len())?;
        self.state_index(x)
            .ok_or_else(|| Error::invalid(format!("{x:?} is not a grid state")))
    }

    pub(crate) fn require_shock(&self, w: usize) -> Result<()> {
        if w >= self.shocks() {
            return Err(Error::invalid(format!("shock {w} out of range")));
        }
        Ok(())
    }

    /// Whether `y` satisfies the Box or NLP constraints at `x`.
    fn admits(&self, x: &[f64], y: &[f64]) -> bool {
        match &self.constraint {
            ConstraintMap::Finite { .. } => unreachable!("finite maps list candidates directly"),
            ConstraintMap::Box { lower, upper } => {
                let (l, u) = (lower.at(x), upper.at(x));
                (0..y.len()).all(|d| y[d] >= l[d] - FEAS_TOL && y[d] <= u[d] + FEAS_TOL)
            }
            ConstraintMap::Nlp { ineq, eq } => {
                let mut z = x.to_vec();
                z.extend_from_slice(y);
                ineq.iter().all(|f| f.eval(&z) <= FEAS_TOL)
                    && eq.iter().all(|f| f.eval(&z).abs() <= FEAS_TOL)
            }
        }
    }

    /// `y_j ∈ Γ(x_i, ω)`.
    pub fn is_feasible(&self, w: usize, i: usize, j: usize) -> bool {
        self.feasible[w][i].contains(&j)
    }

    /// `Γ(·, ω)` is the same set at every grid state.
    pub fn constraint_independent_of_state(&self) -> bool {
        match &self.constraint {
            ConstraintMap::Box { lower, upper } => {
                !lower.moves_with_state() && !upper.moves_with_state()
            }
            _ => self
                .feasible
                .iter()
                .all(|per_state| per_state.iter().all(|l| l == &per_state[0])),
        }
    }

    /// Largest `|u|` over feasible grid pairs.
    pub fn cost_sup(&self) -> f64 {
        self.cost
            .iter()
            .flatten()
            .flatten()
            .fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Coordinate-wise bounding box of the grid.
    pub fn grid_box(&self) -> (Point, Point) {
        let n = self.dim();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for p in &self.states {
            for d in 0..n {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }

    /// Smallest distance between two distinct grid states.
    pub fn grid_spacing(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, p) in self.states.iter().enumerate() {
            for q in &self.states[i + 1..] {
                best = best.min(linalg::dist(p, q));
            }
        }
        if best.is_finite() {
            best
        } else {
            1.0
        }
    }

    /// Same model with every cost replaced by `c u + k`.
    pub fn affine_costs(&self, c: f64, k: f64) -> Result<DPModel> {
        if !(c > 0.0) {
            return Err(Error::invalid("cost scaling must be positive"));
        }
        let n2 = 2 * self.dim();
        let costs = self
            .costs
            .iter()
            .map(|f| {
                FnExpr::sum(vec![
                    FnExpr::scale(c, f.clone())?,
                    FnExpr::constant(n2, k),
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        DPModel::new(
            self.states.clone(),
            self.kernel.clone(),
            self.beta,
            costs,
            self.constraint.clone(),
        )
    }
}

fn validate_constraint(c: &ConstraintMap, n: usize, states: usize, shocks: usize) -> Result<()> {
    match c {
        ConstraintMap::Finite { candidates } => {
            if candidates.len() != shocks || candidates.iter().any(|r| r.len() != states) {
                return Err(Error::invalid(
                    "finite constraint needs one candidate list per shock and state",
                ));
            }
            for list in candidates.iter().flatten() {
                if list.is_empty() {
                    return Err(Error::invalid("finite candidate lists must be nonempty"));
                }
                if list.iter().any(|&j| j >= states) {
                    return Err(Error::invalid("candidate index out of range"));
                }
            }
        }
        ConstraintMap::Box { lower, upper } => {
            Error::check_dim(n, lower.len())?;
            Error::check_dim(n, upper.len())?;
            if let (Bound::Const(l), Bound::Const(u)) = (lower, upper) {
                if l.iter().zip(u).any(|(a, b)| a >= b) {
                    return Err(Error::invalid("box needs lower < upper"));
                }
            }
        }
        ConstraintMap::Nlp { ineq, eq } => {
            for f in ineq.iter().chain(eq) {
                Error::check_dim(2 * n, f.validate()?)?;
                if !f.is_smooth() {
                    return Err(Error::invalid(
                        "NLP constraints must be affine or quadratic",
                    ));
                }
            }
        }
    }
    Ok(())
}

/// `count` equally spaced points on `[a, b]`.
pub fn grid_1d(a: f64, b: f64, count: usize) -> Vec<Point> {
    if count == 1 {
        return vec![vec![a]];
    }
    (0..count)
        .map(|k| vec![a + (b - a) * k as f64 / (count - 1) as f64])
        .collect()
}

/// Tensor grid `grid_1d(a, b, count)^2`, first coordinate slowest.
pub fn grid_2d(a: f64, b: f64, count: usize) -> Vec<Point> {
    let axis = grid_1d(a, b, count);
    let mut out = Vec::with_capacity(count * count);
    for p in &axis {
        for q in &axis {
            out.push(vec![p[0], q[0]]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn floor_model() -> DPModel {
        DPModel::new(
            grid_1d(-1.0, 1.0, 9),
            StochasticKernel::identity(1),
            0.0,
            vec![FnExpr::affine(vec![0.0, 1.0], 0.0)],
            ConstraintMap::Box {
                lower: Bound::StatePlus(vec![0.0]),
                upper: Bound::Const(vec![1.0]),
            },
        )
        .unwrap()
    }

    #[test]
    fn box_feasibility_moves_with_state() {
        let m = floor_model();
        assert_eq!(m.feasible(0, 0).len(), 9);
        assert_eq!(m.feasible(0, 8), &[8]);
        assert!(!m.constraint_independent_of_state());
    }

    #[test]
    fn json_round_trip() {
        let m = floor_model();
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"state_plus\""));
        assert!(s.contains("\"kind\":\"box\""));
        let back: DPModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_bad_models() {
        let k = StochasticKernel::identity(1);
        let u = vec![FnExpr::affine(vec![0.0, 1.0], 0.0)];
        let all = ConstraintMap::all_states(2, 1);
        let s = grid_1d(0.0, 1.0, 2);
        assert!(DPModel::new(s.clone(), k.clone(), 1.0, u.clone(), all.clone()).is_err());
        assert!(DPModel::new(s.clone(), k.clone(), 0.5, vec![], all.clone()).is_err());
        let empty = ConstraintMap::Nlp {
            ineq: vec![FnExpr::affine(vec![0.0, 0.0], 5.0)],
            eq: vec![],
        };
        assert!(DPModel::new(s.clone(), k.clone(), 0.5, u.clone(), empty).is_err());
        let kinked = ConstraintMap::Nlp {
            ineq: vec![FnExpr::max(vec![
                FnExpr::affine(vec![1.0, 0.0], 0.0),
                FnExpr::affine(vec![0.0, 1.0], 0.0),
            ])
            .unwrap()],
            eq: vec![],
        };
        assert!(DPModel::new(s, k, 0.5, u, kinked).is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(grid_1d(-1.0, 1.0, 9)[1], vec![-0.75]);
        let g = grid_2d(0.0, 1.0, 3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[1], vec![0.0, 0.5]);
    }
}
