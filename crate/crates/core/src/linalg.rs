//! Small dense vector helpers shared by the geometry and calculus modules.

use nalgebra::{DMatrix, DVector};

pub type Point = Vec<f64>;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[inline]
pub fn sub(a: &[f64], b: &[f64]) -> Point {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[inline]
pub fn add(a: &[f64], b: &[f64]) -> Point {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[inline]
pub fn scaled(a: &[f64], c: f64) -> Point {
    a.iter().map(|x| c * x).collect()
}

#[inline]
pub fn axpy(y: &mut [f64], c: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn unit(v: &[f64]) -> Point {
    let n = norm(v);
    scaled(v, 1.0 / n)
}

/// `Q x` for a row-major square matrix.
pub fn mat_vec(q: &[Vec<f64>], x: &[f64]) -> Point {
    q.iter().map(|row| dot(row, x)).collect()
}

pub fn to_dmatrix(rows: &[Vec<f64>], ncols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

/// Numerical rank of a row set via SVD, singular values below `tol * max(1, s_max)` dropped.
pub fn rank(rows: &[Vec<f64>], ncols: usize, tol: f64) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let m = to_dmatrix(rows, ncols);
    let svd = m.svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cut = tol * smax.max(1.0);
    svd.singular_values.iter().filter(|s| **s > cut).count()
}

/// Minimum-norm least-squares solution of `A z = b`, with the residual norm.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    if a.ncols() == 0 {
        return Some((DVector::zeros(0), b.norm()));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = 1e-12 * smax.max(1.0);
    let z = svd.solve(b, eps).ok()?;
    let r = (a * &z - b).norm();
    Some((z, r))
}
