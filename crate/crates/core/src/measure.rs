//! Finite weighted-atom measure spaces and stochastic kernels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of shock paths [`iterate_kernel`] will enumerate.
pub const PATH_CAP: u128 = 10_000_000;

/// Atoms carry a sample parameter `t_i` (a real vector) and a weight `w_i >= 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureJson", into = "MeasureJson")]
pub struct MeasureSpace {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AtomsJson {
    Scalar(Vec<f64>),
    Vector(Vec<Vec<f64>>),
}

#[derive(Serialize, Deserialize)]
struct MeasureJson {
    atoms: AtomsJson,
    weights: Vec<f64>,
}

impl TryFrom<MeasureJson> for MeasureSpace {
    type Error = Error;
    fn try_from(raw: MeasureJson) -> Result<Self> {
        let atoms = match raw.atoms {
            AtomsJson::Scalar(ts) => ts.into_iter().map(|t| vec![t]).collect(),
            AtomsJson::Vector(ts) => ts,
        };
        MeasureSpace::new(atoms, raw.weights)
    }
}

impl From<MeasureSpace> for MeasureJson {
    fn from(m: MeasureSpace) -> Self {
        let atoms = if m.atoms.iter().all(|a| a.len() == 1) {
            AtomsJson::Scalar(m.atoms.iter().map(|a| a[0]).collect())
        } else {
            AtomsJson::Vector(m.atoms)
        };
        MeasureJson {
            atoms,
            weights: m.weights,
        }
    }
}

impl MeasureSpace {
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("a measure space needs at least one atom"));
        }
        if atoms.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("total mass must be positive"));
        }
        Ok(MeasureSpace { atoms, weights })
    }

    /// Unit-mass measure on scalar atoms with the given probabilities.
    pub fn discrete(atoms: &[f64], weights: &[f64]) -> Result<Self> {
        Self::new(atoms.iter().map(|t| vec![*t]).collect(), weights.to_vec())
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `(t_i, w_i)` pairs in atom order.
    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.atoms
            .iter()
            .map(|a| a.as_slice())
            .zip(self.weights.iter().copied())
    }
}

/// Midpoint-rule discretisation of Lebesgue measure on `[a, b]` into `n` atoms.
pub fn uniform_discretization(n: usize, a: f64, b: f64) -> Result<MeasureSpace> {
    if n == 0 {
        return Err(Error::invalid("uniform_discretization needs N >= 1"));
    }
    if !(a < b) {
        return Err(Error::invalid("uniform_discretization needs a < b"));
    }
    let h = (b - a) / n as f64;
    let atoms = (0..n).map(|i| vec![a + (i as f64 + 0.5) * h]).collect();
    MeasureSpace::new(atoms, vec![h; n])
}

/// `sum_i w_i f(t_i)`.
pub fn integrate_scalar<F>(f: F, m: &MeasureSpace) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    m.iter().map(|(t, w)| w * f(t)).sum()
}

/// Row-stochastic matrix `P(w' | w)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelJson", into = "KernelJson")]
pub struct StochasticKernel {
    rows: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct KernelJson {
    rows: Vec<Vec<f64>>,
}

impl TryFrom<KernelJson> for StochasticKernel {
    type Error = Error;
    fn try_from(raw: KernelJson) -> Result<Self> {
        StochasticKernel::new(raw.rows)
    }
}

impl From<StochasticKernel> for KernelJson {
    fn from(k: StochasticKernel) -> Self {
        KernelJson { rows: k.rows }
    }
}

impl StochasticKernel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("kernel needs at least one state"));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!("kernel row {i} has {} entries, expected {n}", row.len())));
            }
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::invalid(format!("kernel row {i} has a negative or non-finite entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("kernel row {i} sums to {s}, not 1")));
            }
        }
        Ok(StochasticKernel { rows })
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        StochasticKernel { rows }
    }

    pub fn states(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, w: usize) -> &[f64] {
        &self.rows[w]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// `P(. | w)` as a measure over next-shock labels `0..n`.
    pub fn row_measure(&self, w: usize) -> Result<MeasureSpace> {
        let atoms = (0..self.states()).map(|j| vec![j as f64]).collect();
        MeasureSpace::new(atoms, self.rows[w].clone())
    }
}

/// Distribution of shock paths `(w_1, ..., w_t)` started from `w0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathMeasure {
    pub paths: Vec<Vec<usize>>,
    pub masses: Vec<f64>,
}

impl PathMeasure {
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Marginal law of the shock at step `k` (1-based).
    pub fn marginal(&self, k: usize, states: usize) -> Vec<f64> {
        let mut out = vec![0.0; states];
        for (p, m) in self.paths.iter().zip(&self.masses) {
            out[p[k - 1]] += m;
        }
        out
    }
}

/// Product measure over length-`t` shock paths: `P(w_1|w0) P(w_2|w_1) ...`.
///
/// Zero-probability transitions are pruned, so the enumeration only holds
/// paths with positive mass.
pub fn iterate_kernel(p: &StochasticKernel, t: usize, w0: usize) -> Result<PathMeasure> {
    if t == 0 {
        return Err(Error::invalid("iterate_kernel needs t >= 1"));
    }
    if w0 >= p.states() {
        return Err(Error::invalid(format!("initial shock {w0} out of range")));
    }
    let bound = (p.states() as u128).checked_pow(t as u32).unwrap_or(u128::MAX);
    let mut paths: Vec<Vec<usize>> = vec![Vec::new()];
    let mut masses = vec![1.0];
    for _ in 0..t {
        let mut np = Vec::new();
        let mut nm = Vec::new();
        for (path, mass) in paths.iter().zip(&masses) {
            let cur = *path.last().unwrap_or(&w0);
            for (j, &pj) in p.row(cur).iter().enumerate() {
                if pj > 0.0 {
                    if np.len() as u128 >= PATH_CAP {
                        return Err(Error::Capacity {
                            what: "kernel shock paths",
                            needed: bound,
                            cap: PATH_CAP,
                            advice: "shorten the horizon",
                        });
                    }
                    let mut q = path.clone();
                    q.push(j);
                    np.push(q);
                    nm.push(mass * pj);
                }
            }
        }
        paths = np;
        masses = nm;
    }
    Ok(PathMeasure { paths, masses })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_examples() {
        let m = uniform_discretization(1, 0.0, 1.0).unwrap();
        assert_eq!(m.atoms(), &[vec![0.5]]);
        assert_eq!(m.weights(), &[1.0]);
        let m = uniform_discretization(2, 0.0, 1.0).unwrap();
        assert_eq!(m.atoms(), &[vec![0.25], vec![0.75]]);
        assert_eq!(m.weights(), &[0.5, 0.5]);
        let m = uniform_discretization(4, 0.0, 2.0).unwrap();
        let ts: Vec<f64> = m.atoms().iter().map(|a| a[0]).collect();
        assert_eq!(ts, vec![0.25, 0.75, 1.25, 1.75]);
        assert_eq!(m.weights(), &[0.5; 4]);
        assert!(uniform_discretization(0, 0.0, 1.0).is_err());
        assert!(uniform_discretization(3, 1.0, 1.0).is_err());
    }

    #[test]
    fn integrate_examples() {
        let m = MeasureSpace::discrete(&[0.1, 0.9], &[0.3, 0.7]).unwrap();
        assert!((integrate_scalar(|_| 1.0, &m) - 1.0).abs() < 1e-15);
        let m2 = uniform_discretization(2, 0.0, 1.0).unwrap();
        assert_eq!(integrate_scalar(|t| t[0], &m2), 0.5);
        let m1000 = uniform_discretization(1000, 0.0, 1.0).unwrap();
        assert!((integrate_scalar(|t| t[0] * t[0], &m1000) - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn midpoint_refinement_is_second_order() {
        let f = |t: &[f64]| t[0] * t[0];
        let mut prev_err = f64::NAN;
        for n in [4usize, 8, 16, 32, 64] {
            let m = uniform_discretization(n, 0.0, 1.0).unwrap();
            let err = (integrate_scalar(f, &m) - 1.0 / 3.0).abs();
            if prev_err.is_finite() {
                // midpoint error for t^2 is exactly 1/(12 N^2)
                assert!((prev_err / err - 4.0).abs() < 1e-6);
            }
            prev_err = err;
        }
    }

    #[test]
    fn kernel_validation() {
        assert!(StochasticKernel::new(vec![vec![0.5, 0.6], vec![1.0, 0.0]]).is_err());
        assert!(StochasticKernel::new(vec![vec![1.0]]).is_ok());
        assert!(StochasticKernel::new(vec![vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn iterate_examples() {
        let k = StochasticKernel::new(vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let one = iterate_kernel(&k, 1, 0).unwrap();
        assert_eq!(one.masses, vec![0.3, 0.7]);

        let id = StochasticKernel::identity(2);
        let abs = iterate_kernel(&id, 3, 1).unwrap();
        assert_eq!(abs.paths, vec![vec![1, 1, 1]]);
        assert_eq!(abs.masses, vec![1.0]);

        let half = StochasticKernel::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let two = iterate_kernel(&half, 2, 0).unwrap();
        assert_eq!(two.paths.len(), 4);
        assert!(two.masses.iter().all(|m| *m == 0.25));
    }

    #[test]
    fn iterate_masses_sum_to_one() {
        let k = StochasticKernel::new(vec![
            vec![0.2, 0.5, 0.3],
            vec![0.1, 0.1, 0.8],
            vec![0.6, 0.0, 0.4],
        ])
        .unwrap();
        for t in 1..=10 {
            let pm = iterate_kernel(&k, t, 2).unwrap();
            assert!((pm.total_mass() - 1.0).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn measure_json_forms() {
        let m: MeasureSpace = serde_json::from_str(r#"{"atoms":[0.25,0.75],"weights":[0.5,0.5]}"#).unwrap();
        assert_eq!(m.len(), 2);
        let back = serde_json::to_string(&m).unwrap();
        assert_eq!(back, r#"{"atoms":[0.25,0.75],"weights":[0.5,0.5]}"#);
        let bad: std::result::Result<MeasureSpace, _> =
            serde_json::from_str(r#"{"atoms":[0.25],"weights":[-1.0]}"#);
        assert!(bad.is_err());
        let k: StochasticKernel = serde_json::from_str(r#"{"rows":[[1.0]]}"#).unwrap();
        assert_eq!(k.states(), 1);
    }
}
