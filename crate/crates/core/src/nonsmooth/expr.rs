use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dot, Point};

/// Expression tree for a locally Lipschitz function on R^n.
///
/// Quadratic leaves evaluate `0.5 x'Qx + a'x + b`, so their gradient is `Qx + a`.
/// Scale coefficients are nonnegative; sign flips go through [`FnExpr::Neg`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExprJson", into = "ExprJson")]
pub enum FnExpr {
    Affine { a: Point, b: f64 },
    Quadratic { q: Vec<Point>, a: Point, b: f64 },
    Sum(Vec<FnExpr>),
    Scale(f64, Box<FnExpr>),
    Neg(Box<FnExpr>),
    Max(Vec<FnExpr>),
    Min(Vec<FnExpr>),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
enum ExprJson {
    Affine {
        a: Point,
        b: f64,
    },
    Quad {
        #[serde(rename = "Q")]
        q: Vec<Point>,
        a: Point,
        b: f64,
    },
    Sum {
        args: Vec<FnExpr>,
    },
    Scale {
        c: f64,
        arg: Box<FnExpr>,
    },
    Neg {
        arg: Box<FnExpr>,
    },
    Max {
        args: Vec<FnExpr>,
    },
    Min {
        args: Vec<FnExpr>,
    },
}

impl TryFrom<ExprJson> for FnExpr {
    type Error = Error;
    fn try_from(raw: ExprJson) -> Result<Self> {
        let e = match raw {
            ExprJson::Affine { a, b } => FnExpr::Affine { a, b },
            ExprJson::Quad { q, a, b } => FnExpr::Quadratic { q, a, b },
            ExprJson::Sum { args } => FnExpr::Sum(args),
            ExprJson::Scale { c, arg } => FnExpr::Scale(c, arg),
            ExprJson::Neg { arg } => FnExpr::Neg(arg),
            ExprJson::Max { args } => FnExpr::Max(args),
            ExprJson::Min { args } => FnExpr::Min(args),
        };
        e.validate()?;
        Ok(e)
    }
}

impl From<FnExpr> for ExprJson {
    fn from(e: FnExpr) -> Self {
        match e {
            FnExpr::Affine { a, b } => ExprJson::Affine { a, b },
            FnExpr::Quadratic { q, a, b } => ExprJson::Quad { q, a, b },
            FnExpr::Sum(args) => ExprJson::Sum { args },
            FnExpr::Scale(c, arg) => ExprJson::Scale { c, arg },
            FnExpr::Neg(arg) => ExprJson::Neg { arg },
            FnExpr::Max(args) => ExprJson::Max { args },
            FnExpr::Min(args) => ExprJson::Min { args },
        }
    }
}

impl FnExpr {
    pub fn affine(a: Point, b: f64) -> FnExpr {
        FnExpr::Affine { a, b }
    }

    pub fn constant(dim: usize, b: f64) -> FnExpr {
        FnExpr::Affine { a: vec![0.0; dim], b }
    }

    pub fn quadratic(q: Vec<Point>, a: Point, b: f64) -> Result<FnExpr> {
        let e = FnExpr::Quadratic { q, a, b };
        e.validate()?;
        Ok(e)
    }

    pub fn sum(args: Vec<FnExpr>) -> Result<FnExpr> {
        let e = FnExpr::Sum(args);
        e.validate()?;
        Ok(e)
    }

    pub fn scale(c: f64, f: FnExpr) -> Result<FnExpr> {
        let e = FnExpr::Scale(c, Box::new(f));
        e.validate()?;
        Ok(e)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(f: FnExpr) -> FnExpr {
        FnExpr::Neg(Box::new(f))
    }

    pub fn max(args: Vec<FnExpr>) -> Result<FnExpr> {
        let e = FnExpr::Max(args);
        e.validate()?;
        Ok(e)
    }

    pub fn min(args: Vec<FnExpr>) -> Result<FnExpr> {
        let e = FnExpr::Min(args);
        e.validate()?;
        Ok(e)
    }

    /// `|x - t|` on the real line.
    pub fn abs_shifted(t: f64) -> FnExpr {
        FnExpr::Max(vec![
            FnExpr::affine(vec![1.0], -t),
            FnExpr::affine(vec![-1.0], t),
        ])
    }

    /// `(x - t)^2` on the real line.
    pub fn square_shifted(t: f64) -> FnExpr {
        FnExpr::Quadratic {
            q: vec![vec![2.0]],
            a: vec![-2.0 * t],
            b: t * t,
        }
    }

    /// Input dimension, after checking every invariant of the tree.
    pub fn validate(&self) -> Result<usize> {
        match self {
            FnExpr::Affine { a, b } => {
                if a.is_empty() {
                    return Err(Error::invalid("affine leaf needs a nonempty coefficient vector"));
                }
                if !b.is_finite() || !a.iter().all(|v| v.is_finite()) {
                    return Err(Error::invalid("affine leaf has non-finite data"));
                }
                Ok(a.len())
            }
            FnExpr::Quadratic { q, a, b } => {
                let n = a.len();
                if n == 0 {
                    return Err(Error::invalid("quadratic leaf needs a nonempty linear term"));
                }
                if q.len() != n || q.iter().any(|r| r.len() != n) {
                    return Err(Error::invalid(format!("quadratic leaf needs a {n}x{n} matrix")));
                }
                if !b.is_finite() || !a.iter().chain(q.iter().flatten()).all(|v| v.is_finite()) {
                    return Err(Error::invalid("quadratic leaf has non-finite data"));
                }
                let asymmetric = (0..n).any(|i| {
                    (0..i).any(|j| (q[i][j] - q[j][i]).abs() > 1e-12 * (1.0 + q[i][j].abs()))
                });
                if asymmetric {
                    return Err(Error::invalid("quadratic matrix must be symmetric"));
                }
                Ok(n)
            }
            FnExpr::Scale(c, f) => {
                if !(c.is_finite() && *c >= 0.0) {
                    return Err(Error::invalid(format!(
                        "scale coefficient {c} must be finite and nonnegative (use neg for sign flips)"
                    )));
                }
                f.validate()
            }
            FnExpr::Neg(f) => f.validate(),
            FnExpr::Sum(args) | FnExpr::Max(args) | FnExpr::Min(args) => {
                let first = args
                    .first()
                    .ok_or_else(|| Error::invalid("sum/max/min need at least one argument"))?
                    .validate()?;
                for g in &args[1..] {
                    Error::check_dim(first, g.validate()?)?;
                }
                Ok(first)
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FnExpr::Affine { a, .. } | FnExpr::Quadratic { a, .. } => a.len(),
            FnExpr::Scale(_, f) | FnExpr::Neg(f) => f.dim(),
            FnExpr::Sum(args) | FnExpr::Max(args) | FnExpr::Min(args) => args[0].dim(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            FnExpr::Affine { a, b } => dot(a, x) + b,
            FnExpr::Quadratic { q, a, b } => 0.5 * dot(x, &linalg::mat_vec(q, x)) + dot(a, x) + b,
            FnExpr::Sum(args) => args.iter().map(|g| g.eval(x)).sum(),
            FnExpr::Scale(c, f) => c * f.eval(x),
            FnExpr::Neg(f) => -f.eval(x),
            FnExpr::Max(args) => args.iter().map(|g| g.eval(x)).fold(f64::NEG_INFINITY, f64::max),
            FnExpr::Min(args) => args.iter().map(|g| g.eval(x)).fold(f64::INFINITY, f64::min),
        }
    }

    /// Checked evaluation.
    pub fn value_at(&self, x: &[f64]) -> Result<f64> {
        Error::check_dim(self.validate()?, x.len())?;
        Ok(self.eval(x))
    }

    /// No max/min node anywhere in the tree.
    pub fn is_smooth(&self) -> bool {
        match self {
            FnExpr::Affine { .. } | FnExpr::Quadratic { .. } => true,
            FnExpr::Scale(_, f) | FnExpr::Neg(f) => f.is_smooth(),
            FnExpr::Sum(args) => args.iter().all(|g| g.is_smooth()),
            FnExpr::Max(_) | FnExpr::Min(_) => false,
        }
    }

    /// Every leaf is affine.
    pub fn is_piecewise_affine(&self) -> bool {
        match self {
            FnExpr::Affine { .. } => true,
            FnExpr::Quadratic { q, .. } => q.iter().flatten().all(|v| *v == 0.0),
            FnExpr::Scale(_, f) | FnExpr::Neg(f) => f.is_piecewise_affine(),
            FnExpr::Sum(args) | FnExpr::Max(args) | FnExpr::Min(args) => {
                args.iter().all(|g| g.is_piecewise_affine())
            }
        }
    }

    /// Equivalent tree without `Neg` nodes: negation is pushed into the leaves,
    /// swapping max and min on the way down.
    pub fn push_negations(&self) -> FnExpr {
        self.signed(false)
    }

    fn signed(&self, negate: bool) -> FnExpr {
        let s = if negate { -1.0 } else { 1.0 };
        match self {
            FnExpr::Affine { a, b } => FnExpr::Affine {
                a: linalg::scaled(a, s),
                b: s * b,
            },
            FnExpr::Quadratic { q, a, b } => FnExpr::Quadratic {
                q: q.iter().map(|r| linalg::scaled(r, s)).collect(),
                a: linalg::scaled(a, s),
                b: s * b,
            },
            FnExpr::Scale(c, f) => FnExpr::Scale(*c, Box::new(f.signed(negate))),
            FnExpr::Neg(f) => f.signed(!negate),
            FnExpr::Sum(args) => FnExpr::Sum(args.iter().map(|g| g.signed(negate)).collect()),
            FnExpr::Max(args) => {
                let inner = args.iter().map(|g| g.signed(negate)).collect();
                if negate {
                    FnExpr::Min(inner)
                } else {
                    FnExpr::Max(inner)
                }
            }
            FnExpr::Min(args) => {
                let inner = args.iter().map(|g| g.signed(negate)).collect();
                if negate {
                    FnExpr::Max(inner)
                } else {
                    FnExpr::Min(inner)
                }
            }
        }
    }

    /// `z -> f(A z + c)`, with `A` given as `dim(f)` rows of length `dim(z)`.
    pub fn compose_affine(&self, a_rows: &[Point], c: &[f64]) -> Result<FnExpr> {
        let n_old = self.validate()?;
        Error::check_dim(n_old, a_rows.len())?;
        Error::check_dim(n_old, c.len())?;
        let n_new = a_rows.first().map(|r| r.len()).unwrap_or(0);
        if n_new == 0 || a_rows.iter().any(|r| r.len() != n_new) {
            return Err(Error::invalid("composition matrix must be rectangular and nonempty"));
        }
        Ok(self.compose_unchecked(a_rows, c, n_new))
    }

    fn compose_unchecked(&self, a_rows: &[Point], c: &[f64], n_new: usize) -> FnExpr {
        // A' v for v in the old space
        let at = |v: &[f64]| -> Point {
            (0..n_new)
                .map(|j| a_rows.iter().zip(v).map(|(row, vi)| row[j] * vi).sum())
                .collect()
        };
        match self {
            FnExpr::Affine { a, b } => FnExpr::Affine {
                a: at(a),
                b: dot(a, c) + b,
            },
            FnExpr::Quadratic { q, a, b } => {
                // Q' = A'QA, a' = A'(Qc + a), b' = c'Qc/2 + a'c + b
                let qa: Vec<Point> = (0..q.len())
                    .map(|i| {
                        (0..n_new)
                            .map(|j| (0..q.len()).map(|k| q[i][k] * a_rows[k][j]).sum())
                            .collect()
                    })
                    .collect();
                let q_new: Vec<Point> = (0..n_new)
                    .map(|r| {
                        (0..n_new)
                            .map(|s| (0..q.len()).map(|i| a_rows[i][r] * qa[i][s]).sum())
                            .collect()
                    })
                    .collect();
                let qc = linalg::mat_vec(q, c);
                let lin = linalg::add(&qc, a);
                FnExpr::Quadratic {
                    q: symmetrize(q_new),
                    a: at(&lin),
                    b: 0.5 * dot(c, &qc) + dot(a, c) + b,
                }
            }
            FnExpr::Scale(k, f) => FnExpr::Scale(*k, Box::new(f.compose_unchecked(a_rows, c, n_new))),
            FnExpr::Neg(f) => FnExpr::Neg(Box::new(f.compose_unchecked(a_rows, c, n_new))),
            FnExpr::Sum(args) => FnExpr::Sum(args.iter().map(|g| g.compose_unchecked(a_rows, c, n_new)).collect()),
            FnExpr::Max(args) => FnExpr::Max(args.iter().map(|g| g.compose_unchecked(a_rows, c, n_new)).collect()),
            FnExpr::Min(args) => FnExpr::Min(args.iter().map(|g| g.compose_unchecked(a_rows, c, n_new)).collect()),
        }
    }

    /// For `f` on `R^n x R^n`, the map `x -> f(x, y)`.
    pub fn freeze_second(&self, y: &[f64]) -> Result<FnExpr> {
        let n = y.len();
        let rows: Vec<Point> = (0..2 * n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let mut c = vec![0.0; n];
        c.extend_from_slice(y);
        self.compose_affine(&rows, &c)
    }

    /// For `f` on `R^n x R^n`, the map `y -> f(x, y)`.
    pub fn freeze_first(&self, x: &[f64]) -> Result<FnExpr> {
        let n = x.len();
        let rows: Vec<Point> = (0..2 * n)
            .map(|i| (0..n).map(|j| if i == n + j { 1.0 } else { 0.0 }).collect())
            .collect();
        let mut c = x.to_vec();
        c.extend(std::iter::repeat_n(0.0, n));
        self.compose_affine(&rows, &c)
    }

    /// Upper bound on the Lipschitz modulus over the box `[lo, hi]`.
    ///
    /// Quadratic leaves use the largest `|Qx + a|` over the box corners, which
    /// is exact because the norm of an affine map is convex.
    pub fn lipschitz_modulus(&self, lo: &[f64], hi: &[f64]) -> Result<f64> {
        let n = self.validate()?;
        Error::check_dim(n, lo.len())?;
        Error::check_dim(n, hi.len())?;
        if lo.iter().zip(hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && l <= h)) {
            return Err(Error::invalid("lipschitz_modulus needs a bounded box with lo <= hi"));
        }
        Ok(self.modulus(lo, hi))
    }

    fn modulus(&self, lo: &[f64], hi: &[f64]) -> f64 {
        match self {
            FnExpr::Affine { a, .. } => linalg::norm(a),
            FnExpr::Quadratic { q, a, .. } => {
                let n = a.len();
                if n <= 16 {
                    (0..(1usize << n))
                        .map(|mask| {
                            let corner: Point = (0..n)
                                .map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] })
                                .collect();
                            linalg::norm(&linalg::add(&linalg::mat_vec(q, &corner), a))
                        })
                        .fold(0.0, f64::max)
                } else {
                    let frob = q.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
                    let r = lo.iter().zip(hi).map(|(l, h)| l.abs().max(h.abs()).powi(2)).sum::<f64>().sqrt();
                    linalg::norm(a) + frob * r
                }
            }
            FnExpr::Scale(c, f) => c * f.modulus(lo, hi),
            FnExpr::Neg(f) => f.modulus(lo, hi),
            FnExpr::Sum(args) => args.iter().map(|g| g.modulus(lo, hi)).sum(),
            FnExpr::Max(args) | FnExpr::Min(args) => {
                args.iter().map(|g| g.modulus(lo, hi)).fold(0.0, f64::max)
            }
        }
    }

    /// Bound on the variation of piece gradients, `sum of |Q|` along the tree.
    pub fn curvature_bound(&self) -> f64 {
        match self {
            FnExpr::Affine { .. } => 0.0,
            FnExpr::Quadratic { q, .. } => q.iter().flatten().map(|v| v * v).sum::<f64>().sqrt(),
            FnExpr::Scale(c, f) => c * f.curvature_bound(),
            FnExpr::Neg(f) => f.curvature_bound(),
            FnExpr::Sum(args) => args.iter().map(|g| g.curvature_bound()).sum(),
            FnExpr::Max(args) | FnExpr::Min(args) => {
                args.iter().map(|g| g.curvature_bound()).fold(0.0, f64::max)
            }
        }
    }
}

fn symmetrize(q: Vec<Point>) -> Vec<Point> {
    let n = q.len();
    (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (q[i][j] + q[j][i])).collect())
        .collect()
}
