//! Sampling and finite-difference oracles used to cross-check the calculus.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::expr::FnExpr;
use crate::convexgeom::Direction;
use crate::error::{Error, Result};
use crate::linalg::{self, Point};

/// Uniform point in the closed Euclidean ball of `radius` around `x`.
pub fn sample_ball<R: Rng>(rng: &mut R, x: &[f64], radius: f64) -> Point {
    let n = x.len();
    let g: Point = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let len = linalg::norm(&g).max(1e-300);
    let r = radius * rng.gen::<f64>().powf(1.0 / n as f64);
    x.iter().zip(&g).map(|(xi, gi)| xi + r * gi / len).collect()
}

/// Lower estimate of the Clarke directional derivative: the largest sampled
/// quotient `(f(x' + t h) - f(x')) / t` over `x'` in a ball and `t` in `(0, radius]`.
pub fn sampled_clarke_dd(
    f: &FnExpr,
    x: &[f64],
    h: &Direction,
    radius: f64,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    let n = f.validate()?;
    Error::check_dim(n, x.len())?;
    Error::check_dim(n, h.dim())?;
    if !(radius > 0.0) || n_samples == 0 {
        return Err(Error::invalid("radius must be positive and n_samples nonzero"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hv = h.as_slice();
    let mut best = f64::NEG_INFINITY;
    for _ in 0..n_samples {
        let xp = sample_ball(&mut rng, x, radius);
        let t = radius * (1.0 - rng.gen::<f64>());
        let mut moved = xp.clone();
        linalg::axpy(&mut moved, t, hv);
        best = best.max((f.eval(&moved) - f.eval(&xp)) / t);
    }
    Ok(best)
}

/// One-sided difference quotient `(f(x + t h) - f(x)) / t`.
pub fn forward_quotient(f: &FnExpr, x: &[f64], h: &[f64], t: f64) -> f64 {
    let mut moved = x.to_vec();
    linalg::axpy(&mut moved, t, h);
    (f.eval(&moved) - f.eval(x)) / t
}

/// Central finite-difference gradient of a scalar function.
pub fn central_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], step: f64) -> Point {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let xi = xp[i];
            xp[i] = xi + step;
            let up = f(&xp);
            xp[i] = xi - step;
            let down = f(&xp);
            xp[i] = xi;
            (up - down) / (2.0 * step)
        })
        .collect()
}
