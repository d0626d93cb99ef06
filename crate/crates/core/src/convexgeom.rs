//! Compact sets in R^n as finite unions of polytopes in vertex form.
//!
//! A [`SetRep`] is the union over its pieces of the convex hull of each piece's
//! vertices. Support functions are exact (a max over vertices). Pieces are
//! pruned to their extreme points in one and two dimensions; in higher
//! dimension redundant vertices are kept, which leaves every support value
//! unchanged.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dot, Point};

/// Absolute tolerance for vertex de-duplication.
pub const DEDUP_TOL: f64 = 1e-12;

/// Largest number of pieces any Minkowski product may produce.
pub const PIECE_CAP: u128 = 1_000_000;

/// Largest number of vertices a single piece may carry after a sum.
pub const VERTEX_CAP: u128 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SetRepJson", into = "SetRepJson")]
pub struct SetRep {
    dim: usize,
    pieces: Vec<Vec<Point>>,
}

#[derive(Serialize, Deserialize)]
struct SetRepJson {
    dim: usize,
    pieces: Vec<Vec<Point>>,
}

impl TryFrom<SetRepJson> for SetRep {
    type Error = Error;
    fn try_from(raw: SetRepJson) -> Result<Self> {
        SetRep::new(raw.dim, raw.pieces)
    }
}

impl From<SetRep> for SetRepJson {
    fn from(s: SetRep) -> Self {
        SetRepJson {
            dim: s.dim,
            pieces: s.pieces,
        }
    }
}

/// A nonzero direction vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Point", into = "Point")]
pub struct Direction(Point);

impl Direction {
    pub fn new(h: Point) -> Result<Self> {
        if h.is_empty() || !h.iter().all(|x| x.is_finite()) || linalg::norm(&h) <= 0.0 {
            return Err(Error::invalid("direction must be a finite nonzero vector"));
        }
        Ok(Direction(h))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn unit(&self) -> Direction {
        Direction(linalg::unit(&self.0))
    }
}

impl TryFrom<Point> for Direction {
    type Error = Error;
    fn try_from(h: Point) -> Result<Self> {
        Direction::new(h)
    }
}

impl From<Direction> for Point {
    fn from(d: Direction) -> Point {
        d.0
    }
}

/// Direction sets used by the inclusion checks: both signs in 1-D, `count`
/// equally spaced angles in 2-D, `count` seeded Gaussian directions otherwise.
pub fn default_directions(dim: usize, count: usize, seed: u64) -> Vec<Direction> {
    use rand::Rng;
    match dim {
        0 => Vec::new(),
        1 => vec![Direction(vec![1.0]), Direction(vec![-1.0])],
        2 => (0..count.max(1))
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / count.max(1) as f64;
                Direction(vec![a.cos(), a.sin()])
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                let v: Point = (0..dim)
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect();
                if linalg::norm(&v) > 1e-9 {
                    out.push(Direction(linalg::unit(&v)));
                }
            }
            out
        }
    }
}

fn same_point(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn dedup_points(points: Vec<Point>) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(points.len());
    for p in points {
        if !out.iter().any(|q| same_point(q, &p, DEDUP_TOL)) {
            out.push(p);
        }
    }
    out
}

fn cross(o: &[f64], a: &[f64], b: &[f64]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Extreme points of a planar point set, counter-clockwise; collinear points dropped.
fn hull_2d(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = dedup_points(points.to_vec());
    if pts.len() <= 2 {
        return pts;
    }
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let scale = pts
        .iter()
        .fold(1.0_f64, |m, p| m.max(p[0].abs()).max(p[1].abs()));
    let eps = 1e-14 * scale * scale;
    let mut lower: Vec<Point> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= eps {
            lower.pop();
        }
        lower.push(p.clone());
    }
    let mut upper: Vec<Point> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= eps {
            upper.pop();
        }
        upper.push(p.clone());
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.is_empty() {
        pts.truncate(1);
        return pts;
    }
    lower
}

fn normalize_piece(dim: usize, piece: Vec<Point>) -> Vec<Point> {
    match dim {
        1 => {
            let lo = piece.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let hi = piece.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            if hi - lo <= DEDUP_TOL {
                vec![vec![lo]]
            } else {
                vec![vec![lo], vec![hi]]
            }
        }
        2 => hull_2d(&piece),
        _ => dedup_points(piece),
    }
}

fn piece_key(piece: &[Point]) -> Vec<Vec<i128>> {
    let mut key: Vec<Vec<i128>> = piece
        .iter()
        .map(|p| p.iter().map(|x| (x / 1e-11).round() as i128).collect())
        .collect();
    key.sort();
    key
}

fn dedup_pieces(pieces: Vec<Vec<Point>>) -> Vec<Vec<Point>> {
    let mut seen = HashSet::new();
    pieces
        .into_iter()
        .filter(|p| seen.insert(piece_key(p)))
        .collect()
}

impl SetRep {
    pub fn new(dim: usize, pieces: Vec<Vec<Point>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("set dimension must be positive"));
        }
        if pieces.is_empty() {
            return Err(Error::invalid("a set needs at least one piece"));
        }
        for piece in &pieces {
            if piece.is_empty() {
                return Err(Error::invalid("every piece needs at least one vertex"));
            }
            for v in piece {
                Error::check_dim(dim, v.len())?;
                if !v.iter().all(|x| x.is_finite()) {
                    return Err(Error::invalid("vertex coordinates must be finite"));
                }
            }
        }
        Ok(Self::from_parts(dim, pieces))
    }

    pub(crate) fn from_parts(dim: usize, pieces: Vec<Vec<Point>>) -> Self {
        let pieces = pieces
            .into_iter()
            .map(|p| normalize_piece(dim, p))
            .collect();
        SetRep {
            dim,
            pieces: dedup_pieces(pieces),
        }
    }

    pub fn singleton(p: Point) -> Self {
        let dim = p.len();
        SetRep {
            dim,
            pieces: vec![vec![p]],
        }
    }

    pub fn origin(dim: usize) -> Self {
        Self::singleton(vec![0.0; dim])
    }

    /// Convex polytope `co(vertices)`.
    pub fn polytope(vertices: Vec<Point>) -> Result<Self> {
        let dim = vertices.first().map(|v| v.len()).unwrap_or(0);
        Self::new(dim, vec![vertices])
    }

    /// Finite point set, one singleton piece per point.
    pub fn points(points: Vec<Point>) -> Result<Self> {
        let dim = points.first().map(|v| v.len()).unwrap_or(0);
        Self::new(dim, points.into_iter().map(|p| vec![p]).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pieces(&self) -> &[Vec<Point>] {
        &self.pieces
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Point> {
        self.pieces.iter().flatten()
    }

    pub fn vertex_count(&self) -> usize {
        self.pieces.iter().map(|p| p.len()).sum()
    }

    pub fn is_convex(&self) -> bool {
        self.pieces.len() == 1
    }

    /// Single point, if every vertex coincides within `tol`.
    pub fn as_point(&self, tol: f64) -> Option<Point> {
        let first = self.pieces[0][0].clone();
        self.vertices()
            .all(|v| same_point(v, &first, tol))
            .then_some(first)
    }

    pub fn diameter(&self) -> f64 {
        let vs: Vec<&Point> = self.vertices().collect();
        let mut d: f64 = 0.0;
        for (i, a) in vs.iter().enumerate() {
            for b in &vs[i + 1..] {
                d = d.max(linalg::dist(a, b));
            }
        }
        d
    }

    pub(crate) fn support_raw(&self, h: &[f64]) -> f64 {
        self.vertices()
            .map(|v| dot(v, h))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn support(&self, h: &Direction) -> Result<f64> {
        Error::check_dim(self.dim, h.dim())?;
        Ok(self.support_raw(h.as_slice()))
    }

    pub fn minkowski_sum(&self, other: &SetRep) -> Result<SetRep> {
        Error::check_dim(self.dim, other.dim)?;
        let needed = self.pieces.len() as u128 * other.pieces.len() as u128;
        if needed > PIECE_CAP {
            return Err(Error::Capacity {
                what: "Minkowski sum pieces",
                needed,
                cap: PIECE_CAP,
                advice: "convexify the operands first (use the w*-integral path)",
            });
        }
        let mut pieces = Vec::with_capacity(needed as usize);
        for pa in &self.pieces {
            for pb in &other.pieces {
                let nv = pa.len() as u128 * pb.len() as u128;
                if nv > VERTEX_CAP {
                    return Err(Error::Capacity {
                        what: "Minkowski sum vertices",
                        needed: nv,
                        cap: VERTEX_CAP,
                        advice: "reduce the ambient dimension or vertex counts",
                    });
                }
                let mut piece = Vec::with_capacity(nv as usize);
                for a in pa {
                    for b in pb {
                        piece.push(linalg::add(a, b));
                    }
                }
                pieces.push(piece);
            }
        }
        Ok(SetRep::from_parts(self.dim, pieces))
    }

    pub fn scale(&self, c: f64) -> SetRep {
        if c == 0.0 {
            return SetRep::origin(self.dim);
        }
        let pieces = self
            .pieces
            .iter()
            .map(|p| p.iter().map(|v| linalg::scaled(v, c)).collect())
            .collect();
        SetRep::from_parts(self.dim, pieces)
    }

    pub fn translate(&self, t: &[f64]) -> SetRep {
        let pieces = self
            .pieces
            .iter()
            .map(|p| p.iter().map(|v| linalg::add(v, t)).collect())
            .collect();
        SetRep::from_parts(self.dim, pieces)
    }

    pub fn union(&self, other: &SetRep) -> Result<SetRep> {
        Error::check_dim(self.dim, other.dim)?;
        let mut pieces = self.pieces.clone();
        pieces.extend(other.pieces.iter().cloned());
        Ok(SetRep::from_parts(self.dim, pieces))
    }

    /// Convex hull as a single piece; the support function is unchanged.
    pub fn convexify(&self) -> SetRep {
        let all: Vec<Point> = self.vertices().cloned().collect();
        SetRep::from_parts(self.dim, vec![all])
    }

    /// Euclidean distance from `p` to the set (exact per piece).
    pub fn distance_to(&self, p: &[f64]) -> Result<f64> {
        Error::check_dim(self.dim, p.len())?;
        Ok(self
            .pieces
            .iter()
            .map(|piece| distance_to_hull(p, piece))
            .fold(f64::INFINITY, f64::min))
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> Result<bool> {
        Ok(self.distance_to(p)? <= tol)
    }
}

pub fn support(s: &SetRep, h: &Direction) -> Result<f64> {
    s.support(h)
}

pub fn minkowski_sum(a: &SetRep, b: &SetRep) -> Result<SetRep> {
    a.minkowski_sum(b)
}

pub fn scale(s: &SetRep, c: f64) -> SetRep {
    s.scale(c)
}

pub fn convexify(s: &SetRep) -> SetRep {
    s.convexify()
}

pub fn distance_to_set(p: &[f64], s: &SetRep) -> Result<f64> {
    s.distance_to(p)
}

/// Distance from `p` to `co(piece)`.
pub(crate) fn distance_to_hull(p: &[f64], piece: &[Point]) -> f64 {
    if p.len() == 1 {
        let lo = piece.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
        let hi = piece.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
        return (lo - p[0]).max(p[0] - hi).max(0.0);
    }
    match piece.len() {
        1 => linalg::dist(p, &piece[0]),
        2 => dist_to_segment(p, &piece[0], &piece[1]),
        _ if p.len() == 2 => dist_to_polygon(p, piece),
        _ => {
            let shifted: Vec<Point> = piece.iter().map(|v| linalg::sub(v, p)).collect();
            linalg::norm(&min_norm_point(&shifted))
        }
    }
}

fn dist_to_segment(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab = linalg::sub(b, a);
    let ap = linalg::sub(p, a);
    let den = dot(&ab, &ab);
    let t = if den > 0.0 {
        (dot(&ap, &ab) / den).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut proj = a.to_vec();
    linalg::axpy(&mut proj, t, &ab);
    linalg::dist(p, &proj)
}

/// `poly` is a counter-clockwise convex polygon with at least three vertices.
fn dist_to_polygon(p: &[f64], poly: &[Point]) -> f64 {
    let n = poly.len();
    let inside = (0..n).all(|i| cross(&poly[i], &poly[(i + 1) % n], p) >= -1e-15);
    if inside {
        return 0.0;
    }
    (0..n)
        .map(|i| dist_to_segment(p, &poly[i], &poly[(i + 1) % n]))
        .fold(f64::INFINITY, f64::min)
}

/// Nearest point to the origin in `co(points)` (Wolfe's algorithm).
pub(crate) fn min_norm_point(points: &[Point]) -> Point {
    let dim = points[0].len();
    let scale = points
        .iter()
        .map(|p| dot(p, p))
        .fold(0.0_f64, f64::max)
        .max(1e-300);
    let start = (0..points.len())
        .min_by(|&i, &j| dot(&points[i], &points[i]).total_cmp(&dot(&points[j], &points[j])))
        .unwrap();
    let mut active = vec![start];
    let mut lambda = vec![1.0];
    let mut x = points[start].clone();
    let combine = |act: &[usize], w: &[f64]| {
        let mut y = vec![0.0; dim];
        for (&i, &wi) in act.iter().zip(w) {
            linalg::axpy(&mut y, wi, &points[i]);
        }
        y
    };
    for _major in 0..(10 * points.len() + 50) {
        let (j, best) = (0..points.len())
            .map(|i| (i, dot(&x, &points[i])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if dot(&x, &x) - best <= 1e-13 * scale || active.contains(&j) {
            break;
        }
        active.push(j);
        lambda.push(0.0);
        for _minor in 0..(points.len() + 5) {
            let k = active.len();
            let mut m = DMatrix::<f64>::zeros(k + 1, k + 1);
            for a in 0..k {
                for b in 0..k {
                    m[(a, b)] = dot(&points[active[a]], &points[active[b]]);
                }
                m[(a, k)] = 1.0;
                m[(k, a)] = 1.0;
            }
            let mut rhs = DVector::<f64>::zeros(k + 1);
            rhs[k] = 1.0;
            let mu: Vec<f64> = match linalg::least_squares(&m, &rhs) {
                Some((z, _)) => z.iter().take(k).cloned().collect(),
                None => break,
            };
            if mu.iter().all(|&v| v > 1e-12) {
                lambda = mu;
                x = combine(&active, &lambda);
                break;
            }
            let mut theta: f64 = 1.0;
            for i in 0..k {
                if mu[i] <= 1e-12 {
                    let den = lambda[i] - mu[i];
                    if den > 0.0 {
                        theta = theta.min(lambda[i] / den);
                    }
                }
            }
            for i in 0..k {
                lambda[i] = (1.0 - theta) * lambda[i] + theta * mu[i];
            }
            let mut keep_a = Vec::new();
            let mut keep_l = Vec::new();
            for i in 0..k {
                if lambda[i] > 1e-12 {
                    keep_a.push(active[i]);
                    keep_l.push(lambda[i]);
                }
            }
            if keep_a.is_empty() {
                keep_a.push(active[0]);
                keep_l.push(1.0);
            }
            let s: f64 = keep_l.iter().sum();
            active = keep_a;
            lambda = keep_l.iter().map(|l| l / s).collect();
            x = combine(&active, &lambda);
        }
    }
    x
}

/// Hausdorff distance between two sets.
///
/// When both sets are convex this is the largest support-function gap over
/// the unit directions in `dirs` (a lower bound that is exact as `dirs`
/// densifies). For unions it is the two-sided excess `sup_{a} dist(a, B)`,
/// computed exactly in 1-D, exactly in 2-D when the farther set is a finite
/// point set or convex, and otherwise as a lower bound from a fixed
/// barycentric sample of each piece.
pub fn hausdorff_distance(a: &SetRep, b: &SetRep, dirs: &[Direction]) -> Result<f64> {
    Error::check_dim(a.dim, b.dim)?;
    if dirs.is_empty() {
        return Err(Error::invalid("hausdorff_distance needs at least one direction"));
    }
    for d in dirs {
        Error::check_dim(a.dim, d.dim())?;
    }
    if a.is_convex() && b.is_convex() {
        return Ok(dirs
            .iter()
            .map(|d| {
                let h = linalg::unit(d.as_slice());
                (a.support_raw(&h) - b.support_raw(&h)).abs()
            })
            .fold(0.0, f64::max));
    }
    Ok(excess(a, b).max(excess(b, a)))
}

/// `sup_{x in from} dist(x, to)`.
fn excess(from: &SetRep, to: &SetRep) -> f64 {
    from.pieces
        .iter()
        .map(|piece| piece_excess(piece, to))
        .fold(0.0, f64::max)
}

fn piece_excess(piece: &[Point], to: &SetRep) -> f64 {
    let d = |p: &[f64]| to.distance_to(p).unwrap_or(f64::INFINITY);
    if piece.len() == 1 || to.is_convex() {
        // distance to a convex set is convex, so the max sits at a vertex
        return piece.iter().map(|v| d(v)).fold(0.0, f64::max);
    }
    match to.dim {
        1 => excess_1d(piece, to),
        2 if to.pieces.iter().all(|p| p.len() == 1) => {
            let targets: Vec<Point> = to.pieces.iter().map(|p| p[0].clone()).collect();
            excess_2d_points(piece, &targets)
        }
        _ => sample_piece(piece).iter().map(|p| d(p)).fold(0.0, f64::max),
    }
}

fn excess_1d(piece: &[Point], to: &SetRep) -> f64 {
    let lo = piece.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
    let hi = piece.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
    let mut ivs: Vec<(f64, f64)> = to
        .pieces
        .iter()
        .map(|p| {
            let a = p.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
            let b = p.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
            (a, b)
        })
        .collect();
    ivs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (a, b) in ivs {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    let dist1 = |x: f64| {
        merged
            .iter()
            .map(|&(a, b)| {
                if x < a {
                    a - x
                } else if x > b {
                    x - b
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min)
    };
    let mut best = dist1(lo).max(dist1(hi));
    for w in merged.windows(2) {
        let mid = 0.5 * (w[0].1 + w[1].0);
        if mid >= lo && mid <= hi {
            best = best.max(dist1(mid));
        }
    }
    best
}

fn nearest_sq(p: &[f64], targets: &[Point], stop_below: f64) -> f64 {
    let mut best = f64::INFINITY;
    for t in targets {
        let dx = p[0] - t[0];
        let dy = p[1] - t[1];
        let d = dx * dx + dy * dy;
        if d < best {
            best = d;
            if best <= stop_below {
                break;
            }
        }
    }
    best
}

/// Exact `sup_{x in co(piece)} dist(x, targets)` in the plane.
///
/// The maximiser is a vertex of some Voronoi cell clipped to the polygon:
/// a polygon vertex, a bisector crossing a polygon edge, or a circumcentre
/// of three targets lying inside the polygon.
fn excess_2d_points(piece: &[Point], targets: &[Point]) -> f64 {
    let poly = hull_2d(piece);
    let mut best_sq: f64 = 0.0;
    let consider = |z: &[f64], best_sq: &mut f64| {
        let d = nearest_sq(z, targets, *best_sq);
        if d > *best_sq {
            *best_sq = d;
        }
    };
    for v in &poly {
        consider(v, &mut best_sq);
    }
    let edges: Vec<(Point, Point)> = match poly.len() {
        1 => Vec::new(),
        2 => vec![(poly[0].clone(), poly[1].clone())],
        n => (0..n)
            .map(|i| (poly[i].clone(), poly[(i + 1) % n].clone()))
            .collect(),
    };
    for (a, b) in &edges {
        let ab = linalg::sub(b, a);
        for (i, q1) in targets.iter().enumerate() {
            for q2 in &targets[i + 1..] {
                let dq = linalg::sub(q2, q1);
                let den = 2.0 * dot(&ab, &dq);
                if den.abs() < 1e-300 {
                    continue;
                }
                let s = (dot(q2, q2) - dot(q1, q1) - 2.0 * dot(a, &dq)) / den;
                if !(0.0..=1.0).contains(&s) {
                    continue;
                }
                let mut z = a.clone();
                linalg::axpy(&mut z, s, &ab);
                let r = (z[0] - q1[0]).powi(2) + (z[1] - q1[1]).powi(2);
                if r > best_sq {
                    consider(&z, &mut best_sq);
                }
            }
        }
    }
    if poly.len() >= 3 {
        let n = targets.len();
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let (a, b, c) = (&targets[i], &targets[j], &targets[k]);
                    let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
                    if d.abs() < 1e-300 {
                        continue;
                    }
                    let a2 = a[0] * a[0] + a[1] * a[1];
                    let b2 = b[0] * b[0] + b[1] * b[1];
                    let c2 = c[0] * c[0] + c[1] * c[1];
                    let ux = (a2 * (b[1] - c[1]) + b2 * (c[1] - a[1]) + c2 * (a[1] - b[1])) / d;
                    let uy = (a2 * (c[0] - b[0]) + b2 * (a[0] - c[0]) + c2 * (b[0] - a[0])) / d;
                    let r = (ux - a[0]).powi(2) + (uy - a[1]).powi(2);
                    if r <= best_sq {
                        continue;
                    }
                    let z = [ux, uy];
                    if dist_to_polygon(&z, &poly) > 1e-12 {
                        continue;
                    }
                    consider(&z, &mut best_sq);
                }
            }
        }
    }
    best_sq.sqrt()
}

/// Vertices, edge subdivisions and barycentric mixtures of a piece.
fn sample_piece(piece: &[Point]) -> Vec<Point> {
    const STEPS: usize = 16;
    let mut out: Vec<Point> = piece.to_vec();
    for (i, a) in piece.iter().enumerate() {
        for b in &piece[i + 1..] {
            for s in 1..STEPS {
                let t = s as f64 / STEPS as f64;
                out.push(a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect());
            }
        }
    }
    let n = piece.len() as f64;
    let mut centroid = vec![0.0; piece[0].len()];
    for v in piece {
        linalg::axpy(&mut centroid, 1.0 / n, v);
    }
    for v in piece {
        out.push(v.iter().zip(&centroid).map(|(x, c)| 0.5 * (x + c)).collect());
    }
    out.push(centroid);
    out
}

/// Normal cone of the box `[l, u]` at `y`, truncated to the sup-norm ball of `radius`.
pub fn normal_cone_box(l: &[f64], u: &[f64], y: &[f64], radius: f64) -> Result<SetRep> {
    let n = y.len();
    Error::check_dim(n, l.len())?;
    Error::check_dim(n, u.len())?;
    if !(radius >= 0.0) {
        return Err(Error::invalid("cone radius must be nonnegative"));
    }
    let mut ranges = Vec::with_capacity(n);
    for i in 0..n {
        if l[i] > u[i] {
            return Err(Error::invalid("box lower bound exceeds upper bound"));
        }
        let tol = 1e-12 * (1.0 + y[i].abs());
        if y[i] < l[i] - tol || y[i] > u[i] + tol {
            return Err(Error::invalid(format!(
                "point component {i} = {} lies outside [{}, {}]",
                y[i], l[i], u[i]
            )));
        }
        let at_lo = (y[i] - l[i]).abs() <= tol;
        let at_hi = (y[i] - u[i]).abs() <= tol;
        let lo = if at_lo { -radius } else { 0.0 };
        let hi = if at_hi { radius } else { 0.0 };
        ranges.push((lo, hi));
    }
    let mut verts: Vec<Point> = vec![Vec::with_capacity(n)];
    for &(lo, hi) in &ranges {
        let mut next = Vec::with_capacity(verts.len() * 2);
        for v in &verts {
            let mut a = v.clone();
            a.push(lo);
            next.push(a);
            if hi != lo {
                let mut b = v.clone();
                b.push(hi);
                next.push(b);
            }
        }
        verts = next;
    }
    SetRep::new(n, vec![verts])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: &[f64]) -> Direction {
        Direction::new(v.to_vec()).unwrap()
    }

    fn pts1(xs: &[f64]) -> SetRep {
        SetRep::points(xs.iter().map(|x| vec![*x]).collect()).unwrap()
    }

    fn iv(a: f64, b: f64) -> SetRep {
        SetRep::polytope(vec![vec![a], vec![b]]).unwrap()
    }

    #[test]
    fn support_examples() {
        let s = SetRep::singleton(vec![1.0, 2.0]);
        assert_eq!(s.support(&d(&[3.0, 4.0])).unwrap(), 11.0);
        let i = iv(-1.0, 1.0);
        assert_eq!(i.support(&d(&[1.0])).unwrap(), 1.0);
        assert_eq!(i.support(&d(&[-1.0])).unwrap(), 1.0);
        // brute force over the two vertices
        let two = pts1(&[-1.0, 1.0]);
        let brute = [-1.0_f64, 1.0].iter().map(|v| v * 2.0).fold(f64::MIN, f64::max);
        assert_eq!(two.support(&d(&[2.0])).unwrap(), brute);
    }

    #[test]
    fn support_rejects_dimension_mismatch() {
        let s = SetRep::singleton(vec![1.0, 2.0]);
        assert!(matches!(
            s.support(&d(&[1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn invalid_sets_rejected() {
        assert!(SetRep::new(1, vec![]).is_err());
        assert!(SetRep::new(1, vec![vec![]]).is_err());
        assert!(SetRep::new(2, vec![vec![vec![1.0]]]).is_err());
        assert!(Direction::new(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn duplicate_vertices_removed() {
        let s = SetRep::new(3, vec![vec![vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 1e-14], vec![0.0; 3]]]).unwrap();
        assert_eq!(s.vertex_count(), 2);
    }

    #[test]
    fn minkowski_examples() {
        let s = iv(-1.0, 2.0);
        let z = SetRep::origin(1);
        assert_eq!(z.minkowski_sum(&s).unwrap(), s);

        let a = pts1(&[-1.0, 1.0]);
        let sum = a.minkowski_sum(&a).unwrap();
        // enumerate the four pairwise sums
        let mut brute: Vec<f64> = Vec::new();
        for x in [-1.0, 1.0] {
            for y in [-1.0, 1.0] {
                if !brute.contains(&(x + y)) {
                    brute.push(x + y);
                }
            }
        }
        assert_eq!(sum.pieces().len(), brute.len());
        for b in brute {
            assert_eq!(sum.distance_to(&[b]).unwrap(), 0.0);
        }
        assert_eq!(sum.distance_to(&[1.0]).unwrap(), 1.0);

        let i = iv(0.0, 1.0);
        assert_eq!(i.minkowski_sum(&i).unwrap(), iv(0.0, 2.0));
    }

    #[test]
    fn minkowski_cap() {
        let big = SetRep::points((0..1001).map(|k| vec![k as f64]).collect()).unwrap();
        let err = big.minkowski_sum(&big).unwrap_err();
        assert!(matches!(err, Error::Capacity { .. }));
    }

    #[test]
    fn scale_examples() {
        assert_eq!(pts1(&[-1.0, 1.0]).scale(0.5), pts1(&[-0.5, 0.5]));
        let s = iv(-3.0, 2.0);
        assert_eq!(s.scale(1.0), s);
        assert_eq!(iv(0.0, 2.0).scale(0.0), SetRep::origin(1));
    }

    #[test]
    fn convexify_examples() {
        assert_eq!(pts1(&[-1.0, 1.0]).convexify(), iv(-1.0, 1.0));
        let s = iv(-2.0, 5.0);
        assert_eq!(s.convexify(), s);
        let four = SetRep::points(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.25, 0.25],
        ])
        .unwrap();
        let hull = four.convexify();
        assert_eq!(hull.pieces().len(), 1);
        assert_eq!(hull.vertex_count(), 3);
        assert!(hull.pieces()[0].iter().all(|v| v != &vec![0.25, 0.25]));
    }

    #[test]
    fn hausdorff_examples() {
        let dirs = default_directions(1, 2, 0);
        let s = iv(0.0, 3.0);
        assert_eq!(hausdorff_distance(&s, &s, &dirs).unwrap(), 0.0);
        let gap = hausdorff_distance(&pts1(&[0.0, 1.0]), &iv(0.0, 1.0), &dirs).unwrap();
        // sup over a dense grid of [0,1] of the distance to {0,1}
        let brute = (0..=1000)
            .map(|k| {
                let x = k as f64 / 1000.0;
                x.min(1.0 - x)
            })
            .fold(0.0, f64::max);
        assert!((gap - brute).abs() < 1e-12);
        assert_eq!(hausdorff_distance(&iv(0.0, 1.0), &iv(0.0, 2.0), &dirs).unwrap(), 1.0);
        assert!(hausdorff_distance(&s, &s, &[]).is_err());
    }

    #[test]
    fn hausdorff_planar_points_vs_square() {
        // four corners of the unit square against the square: the centre is farthest
        let corners = SetRep::points(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let sq = corners.convexify();
        let dirs = default_directions(2, 64, 0);
        let gap = hausdorff_distance(&corners, &sq, &dirs).unwrap();
        assert!((gap - 0.5_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn distance_examples() {
        let s = iv(-1.0, 1.0);
        assert_eq!(s.distance_to(&[0.3]).unwrap(), 0.0);
        assert_eq!(s.distance_to(&[2.0]).unwrap(), 1.0);
        let seg = SetRep::polytope(vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!((seg.distance_to(&[1.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn distance_in_three_dimensions() {
        let tri = SetRep::polytope(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        // nearest point to the origin is the centroid
        let d = tri.distance_to(&[0.0, 0.0, 0.0]).unwrap();
        assert!((d - (1.0_f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(tri.distance_to(&[0.2, 0.3, 0.5]).unwrap() < 1e-12);
        let e = tri.distance_to(&[2.0, 0.0, 0.0]).unwrap();
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn box_normal_cone_examples() {
        let c = normal_cone_box(&[0.0, 0.0], &[1.0, 1.0], &[0.5, 0.5], 3.0).unwrap();
        assert_eq!(c, SetRep::origin(2));
        let c = normal_cone_box(&[0.0], &[1.0], &[1.0], 5.0).unwrap();
        assert_eq!(c, iv(0.0, 5.0));
        let c = normal_cone_box(&[0.0, 0.0], &[1.0, 1.0], &[1.0, 0.0], 1.0).unwrap();
        let expect = SetRep::polytope(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, -1.0],
            vec![1.0, -1.0],
        ])
        .unwrap();
        for h in default_directions(2, 64, 0) {
            assert!((c.support(&h).unwrap() - expect.support(&h).unwrap()).abs() < 1e-15);
        }
        assert!(normal_cone_box(&[0.0], &[1.0], &[1.5], 1.0).is_err());
    }
}
