//! Rule-based Clarke and limiting subdifferentials for [`FnExpr`].
//!
//! The tree is first rewritten without negations, then walked bottom-up.
//! Smooth leaves give singletons; sums with at most one nonsmooth term (or
//! only regular terms) translate or add exactly; max of regular children
//! takes the hull of active sets; min of strictly differentiable children
//! keeps the gradients of essentially active branches. Anything outside
//! those patterns is first bounded from outside and then, where possible,
//! resolved exactly by following rays `x + t h`, along which every node is
//! a quadratic polynomial in `t` for small `t > 0`.

use std::cmp::Ordering;

use serde::Serialize;

use super::expr::FnExpr;
use crate::convexgeom::{default_directions, Direction, SetRep};
use crate::error::{Error, Result};
use crate::linalg::{self, dot, Point};

/// Relative tolerance deciding which max/min branches count as active.
pub const ACTIVE_REL_TOL: f64 = 1e-9;

const CANDIDATE_CAP: usize = 4096;
const NORMAL_CAP: usize = 200_000;
const SAMPLED_RAYS: usize = 512;

pub fn active_tol(value: f64) -> f64 {
    ACTIVE_REL_TOL * (1.0 + value.abs())
}

/// A subdifferential value with its certification flags.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubdiffResult {
    pub set: SetRep,
    /// The set is the subdifferential itself, not an outer estimate.
    pub exact: bool,
    /// The function is certified Clarke regular at the point.
    pub regular: bool,
}

/// Everything the calculus knows about `f` at one point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Analysis {
    pub value: f64,
    pub clarke: SubdiffResult,
    pub limiting: SubdiffResult,
    pub strict_derivative: Option<Point>,
}

#[derive(Clone, Debug)]
struct Local {
    value: f64,
    clarke: SetRep,
    limiting: SetRep,
    clarke_exact: bool,
    limiting_exact: bool,
    regular: bool,
    strict: Option<Point>,
}

impl Local {
    fn smooth(value: f64, grad: Point) -> Local {
        let s = SetRep::singleton(grad.clone());
        Local {
            value,
            clarke: s.clone(),
            limiting: s,
            clarke_exact: true,
            limiting_exact: true,
            regular: true,
            strict: Some(grad),
        }
    }

    /// Convex, exact, regular value.
    fn regular_set(value: f64, set: SetRep) -> Local {
        let strict = set.as_point(1e-12);
        Local {
            value,
            clarke: set.clone(),
            limiting: set,
            clarke_exact: true,
            limiting_exact: true,
            regular: true,
            strict,
        }
    }

    fn exact(&self) -> bool {
        self.clarke_exact && self.limiting_exact
    }
}

pub fn analyze(f: &FnExpr, x: &[f64]) -> Result<Analysis> {
    let n = f.validate()?;
    Error::check_dim(n, x.len())?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("evaluation point must be finite"));
    }
    let g = f.push_negations();
    let loc = local(&g, x)?;
    Ok(Analysis {
        value: loc.value,
        clarke: SubdiffResult {
            set: loc.clarke,
            exact: loc.clarke_exact,
            regular: loc.regular,
        },
        limiting: SubdiffResult {
            set: loc.limiting,
            exact: loc.limiting_exact,
            regular: loc.regular,
        },
        strict_derivative: loc.strict,
    })
}

/// Limiting subdifferential. With `strict`, an outer estimate is an error.
pub fn limiting_subdiff(f: &FnExpr, x: &[f64], strict: bool) -> Result<SubdiffResult> {
    let a = analyze(f, x)?;
    if strict && !a.limiting.exact {
        return Err(Error::CalculusInexact(
            "limiting subdifferential is only an outer estimate here".into(),
        ));
    }
    Ok(a.limiting)
}

/// Clarke generalized gradient, a single convex piece.
pub fn clarke_gradient(f: &FnExpr, x: &[f64], strict: bool) -> Result<SubdiffResult> {
    let a = analyze(f, x)?;
    if strict && !a.clarke.exact {
        return Err(Error::CalculusInexact(
            "Clarke gradient is only an outer estimate here".into(),
        ));
    }
    Ok(a.clarke)
}

/// Generalized directional derivative as the support function of the Clarke gradient.
pub fn clarke_dd(f: &FnExpr, x: &[f64], h: &Direction, strict: bool) -> Result<f64> {
    let g = clarke_gradient(f, x, strict)?;
    g.set.support(h)
}

/// Classical one-sided directional derivative `f'(x; h)`.
pub fn directional_derivative(f: &FnExpr, x: &[f64], h: &Direction) -> Result<f64> {
    let n = f.validate()?;
    Error::check_dim(n, x.len())?;
    Error::check_dim(n, h.dim())?;
    Ok(ray(&f.push_negations(), x, h.as_slice()).c1)
}

pub fn is_regular(f: &FnExpr, x: &[f64]) -> Result<bool> {
    Ok(analyze(f, x)?.clarke.regular)
}

pub fn strict_derivative(f: &FnExpr, x: &[f64]) -> Result<Option<Point>> {
    Ok(analyze(f, x)?.strict_derivative)
}

/// Structural exactness certificate: every sum has at most one nonsmooth
/// child, and no nonsmooth node sits under nested max/min of opposite sense.
pub fn exactness_certified(f: &FnExpr) -> bool {
    fn walk(e: &FnExpr, outer: Option<bool>) -> bool {
        match e {
            FnExpr::Affine { .. } | FnExpr::Quadratic { .. } => true,
            FnExpr::Scale(_, f) => walk(f, outer),
            FnExpr::Neg(_) => unreachable!("negations are pushed to the leaves first"),
            FnExpr::Sum(args) => {
                args.iter().filter(|g| !g.is_smooth()).count() <= 1
                    && args.iter().all(|g| walk(g, outer))
            }
            FnExpr::Max(args) | FnExpr::Min(args) => {
                let is_max = matches!(e, FnExpr::Max(_));
                if outer.is_some_and(|o| o != is_max) && !args.iter().all(|g| g.is_smooth()) {
                    return false;
                }
                args.iter().all(|g| walk(g, Some(is_max)))
            }
        }
    }
    walk(&f.push_negations(), None)
}

fn local(node: &FnExpr, x: &[f64]) -> Result<Local> {
    match node {
        FnExpr::Affine { a, .. } => Ok(Local::smooth(node.eval(x), a.clone())),
        FnExpr::Quadratic { q, a, .. } => {
            let g = linalg::add(&linalg::mat_vec(q, x), a);
            Ok(Local::smooth(node.eval(x), g))
        }
        FnExpr::Neg(_) => local(&node.push_negations(), x),
        FnExpr::Scale(c, f) => {
            if *c == 0.0 {
                return Ok(Local::smooth(0.0, vec![0.0; x.len()]));
            }
            let l = local(f, x)?;
            Ok(Local {
                value: c * l.value,
                clarke: l.clarke.scale(*c),
                limiting: l.limiting.scale(*c),
                strict: l.strict.map(|g| linalg::scaled(&g, *c)),
                ..l
            })
        }
        FnExpr::Sum(args) => sum_rule(node, args, x),
        FnExpr::Max(args) => max_rule(node, args, x),
        FnExpr::Min(args) => min_rule(node, args, x),
    }
}

fn sum_rule(node: &FnExpr, args: &[FnExpr], x: &[f64]) -> Result<Local> {
    let locals: Vec<Local> = args.iter().map(|g| local(g, x)).collect::<Result<_>>()?;
    let value: f64 = locals.iter().map(|l| l.value).sum();
    let mut shift = vec![0.0; x.len()];
    let mut rough: Vec<&Local> = Vec::new();
    for l in &locals {
        match &l.strict {
            Some(g) => linalg::axpy(&mut shift, 1.0, g),
            None => rough.push(l),
        }
    }
    match rough.len() {
        0 => Ok(Local::smooth(value, shift)),
        1 => {
            let l = rough[0];
            Ok(Local {
                value,
                clarke: l.clarke.translate(&shift),
                limiting: l.limiting.translate(&shift),
                clarke_exact: l.clarke_exact,
                limiting_exact: l.limiting_exact,
                regular: l.regular,
                strict: None,
            })
        }
        _ => {
            let mut clarke = SetRep::singleton(shift.clone());
            for l in &rough {
                clarke = clarke.minkowski_sum(&l.clarke)?.convexify();
            }
            if rough.iter().all(|l| l.regular && l.exact()) {
                return Ok(Local::regular_set(value, clarke));
            }
            // sum rule inclusions: both subdifferentials of a sum sit inside the sum of subdifferentials
            let mut limiting = SetRep::singleton(shift);
            for l in &rough {
                limiting = match limiting.minkowski_sum(&l.limiting) {
                    Ok(s) => s,
                    Err(Error::Capacity { .. }) => clarke.clone(),
                    Err(e) => return Err(e),
                };
            }
            refine(node, x, outer(value, clarke, limiting))
        }
    }
}

fn outer(value: f64, clarke: SetRep, limiting: SetRep) -> Local {
    Local {
        value,
        clarke,
        limiting,
        clarke_exact: false,
        limiting_exact: false,
        regular: false,
        strict: None,
    }
}

fn hull_of_union(sets: &[&SetRep]) -> Result<SetRep> {
    let mut u = sets[0].clone();
    for s in &sets[1..] {
        u = u.union(s)?;
    }
    Ok(u.convexify())
}

fn max_rule(node: &FnExpr, args: &[FnExpr], x: &[f64]) -> Result<Local> {
    let locals: Vec<Local> = args.iter().map(|g| local(g, x)).collect::<Result<_>>()?;
    let top = locals.iter().map(|l| l.value).fold(f64::NEG_INFINITY, f64::max);
    let tol = active_tol(top);
    let active: Vec<&Local> = locals.iter().filter(|l| l.value >= top - tol).collect();
    if active.len() == 1 {
        return Ok(active[0].clone());
    }
    let clarke = hull_of_union(&active.iter().map(|l| &l.clarke).collect::<Vec<_>>())?;
    if active.iter().all(|l| l.regular && l.exact()) {
        return Ok(Local::regular_set(top, clarke));
    }
    refine(node, x, outer(top, clarke.clone(), clarke))
}

fn min_rule(node: &FnExpr, args: &[FnExpr], x: &[f64]) -> Result<Local> {
    let locals: Vec<Local> = args.iter().map(|g| local(g, x)).collect::<Result<_>>()?;
    let bottom = locals.iter().map(|l| l.value).fold(f64::INFINITY, f64::min);
    let tol = active_tol(bottom);
    let active: Vec<&Local> = locals.iter().filter(|l| l.value <= bottom + tol).collect();
    if active.len() == 1 {
        return Ok(active[0].clone());
    }
    if active.iter().all(|l| l.strict.is_some()) {
        let mut grads: Vec<Point> = Vec::new();
        for l in &active {
            let g = l.strict.clone().unwrap();
            if !grads.iter().any(|h| linalg::dist(h, &g) <= 1e-12) {
                grads.push(g);
            }
        }
        let essential = essentially_active_min(&grads);
        let clarke = SetRep::polytope(grads)?;
        if essential.len() == 1 {
            return Ok(Local::smooth(bottom, essential[0].clone()));
        }
        return Ok(Local {
            value: bottom,
            clarke,
            limiting: SetRep::points(essential)?,
            clarke_exact: true,
            limiting_exact: true,
            regular: false,
            strict: None,
        });
    }
    let clarke = hull_of_union(&active.iter().map(|l| &l.clarke).collect::<Vec<_>>())?;
    let mut limiting = active[0].limiting.clone();
    for l in &active[1..] {
        limiting = limiting.union(&l.limiting)?;
    }
    refine(node, x, outer(bottom, clarke, limiting))
}

/// Gradients `g` of a min of smooth branches for which some direction makes
/// `g` strictly smallest to first order: `0` is not in `co{g - g'}`.
fn essentially_active_min(grads: &[Point]) -> Vec<Point> {
    if grads.len() == 1 {
        return grads.to_vec();
    }
    grads
        .iter()
        .filter(|g| {
            let diffs: Vec<Point> = grads
                .iter()
                .filter(|h| h != g)
                .map(|h| linalg::sub(g, h))
                .collect();
            let scale = diffs.iter().map(|d| linalg::norm(d)).fold(0.0, f64::max);
            let hull = SetRep::polytope(diffs).expect("nonempty finite differences");
            hull.distance_to(&vec![0.0; g.len()]).unwrap() > 1e-10 * scale.max(1e-300)
        })
        .cloned()
        .collect()
}

/// `f(x + t h) = c0 + c1 t + c2 t^2` for small `t > 0`, with the gradient at
/// `x` of the smooth selection that realises it.
#[derive(Clone, Debug)]
struct Ray {
    c0: f64,
    c1: f64,
    c2: f64,
    grad: Point,
}

fn lex_cmp(a: &Ray, b: &Ray, c0_tol: f64) -> Ordering {
    if (a.c0 - b.c0).abs() > c0_tol {
        return a.c0.total_cmp(&b.c0);
    }
    let t1 = 1e-12 * (1.0 + a.c1.abs() + b.c1.abs());
    if (a.c1 - b.c1).abs() > t1 {
        return a.c1.total_cmp(&b.c1);
    }
    let t2 = 1e-12 * (1.0 + a.c2.abs() + b.c2.abs());
    if (a.c2 - b.c2).abs() > t2 {
        return a.c2.total_cmp(&b.c2);
    }
    Ordering::Equal
}

fn ray(node: &FnExpr, x: &[f64], h: &[f64]) -> Ray {
    match node {
        FnExpr::Affine { a, .. } => Ray {
            c0: node.eval(x),
            c1: dot(a, h),
            c2: 0.0,
            grad: a.clone(),
        },
        FnExpr::Quadratic { q, a, .. } => {
            let g = linalg::add(&linalg::mat_vec(q, x), a);
            Ray {
                c0: node.eval(x),
                c1: dot(&g, h),
                c2: 0.5 * dot(h, &linalg::mat_vec(q, h)),
                grad: g,
            }
        }
        FnExpr::Scale(c, f) => {
            let r = ray(f, x, h);
            Ray {
                c0: c * r.c0,
                c1: c * r.c1,
                c2: c * r.c2,
                grad: linalg::scaled(&r.grad, *c),
            }
        }
        FnExpr::Neg(f) => {
            let r = ray(f, x, h);
            Ray {
                c0: -r.c0,
                c1: -r.c1,
                c2: -r.c2,
                grad: linalg::scaled(&r.grad, -1.0),
            }
        }
        FnExpr::Sum(args) => {
            let mut acc = Ray {
                c0: 0.0,
                c1: 0.0,
                c2: 0.0,
                grad: vec![0.0; x.len()],
            };
            for g in args {
                let r = ray(g, x, h);
                acc.c0 += r.c0;
                acc.c1 += r.c1;
                acc.c2 += r.c2;
                linalg::axpy(&mut acc.grad, 1.0, &r.grad);
            }
            acc
        }
        FnExpr::Max(args) | FnExpr::Min(args) => {
            let want = if matches!(node, FnExpr::Max(_)) {
                Ordering::Greater
            } else {
                Ordering::Less
            };
            let rays: Vec<Ray> = args.iter().map(|g| ray(g, x, h)).collect();
            let ext = match want {
                Ordering::Greater => rays.iter().map(|r| r.c0).fold(f64::NEG_INFINITY, f64::max),
                _ => rays.iter().map(|r| r.c0).fold(f64::INFINITY, f64::min),
            };
            let tol = active_tol(ext);
            let mut best = 0;
            for i in 1..rays.len() {
                if lex_cmp(&rays[i], &rays[best], tol) == want {
                    best = i;
                }
            }
            rays.into_iter().nth(best).unwrap()
        }
    }
}

fn push_unique(list: &mut Vec<Point>, g: Point) {
    if !list.iter().any(|h| linalg::dist(h, &g) <= 1e-12) {
        list.push(g);
    }
}

/// Gradients of every smooth selection of `node` that is active at `x`,
/// recording in `normals` the differences compared at max/min nodes.
fn candidates(node: &FnExpr, x: &[f64], normals: &mut Vec<Point>) -> Option<Vec<Point>> {
    match node {
        FnExpr::Affine { .. } | FnExpr::Quadratic { .. } => {
            Some(vec![ray(node, x, &vec![0.0; x.len()]).grad])
        }
        FnExpr::Scale(c, f) => Some(
            candidates(f, x, normals)?
                .into_iter()
                .map(|g| linalg::scaled(&g, *c))
                .collect(),
        ),
        FnExpr::Neg(f) => Some(
            candidates(f, x, normals)?
                .into_iter()
                .map(|g| linalg::scaled(&g, -1.0))
                .collect(),
        ),
        FnExpr::Sum(args) => {
            let mut acc = vec![vec![0.0; x.len()]];
            for g in args {
                let cs = candidates(g, x, normals)?;
                if acc.len() * cs.len() > CANDIDATE_CAP {
                    return None;
                }
                let mut next = Vec::new();
                for a in &acc {
                    for c in &cs {
                        push_unique(&mut next, linalg::add(a, c));
                    }
                }
                acc = next;
            }
            Some(acc)
        }
        FnExpr::Max(args) | FnExpr::Min(args) => {
            let vals: Vec<f64> = args.iter().map(|g| g.eval(x)).collect();
            let ext = if matches!(node, FnExpr::Max(_)) {
                vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            } else {
                vals.iter().cloned().fold(f64::INFINITY, f64::min)
            };
            let tol = active_tol(ext);
            let mut per_child: Vec<Vec<Point>> = Vec::new();
            for (g, v) in args.iter().zip(&vals) {
                if (v - ext).abs() <= tol {
                    per_child.push(candidates(g, x, normals)?);
                }
            }
            for i in 0..per_child.len() {
                for j in i + 1..per_child.len() {
                    for a in &per_child[i] {
                        for b in &per_child[j] {
                            let d = linalg::sub(a, b);
                            if linalg::norm(&d) > 1e-14 {
                                if normals.len() >= NORMAL_CAP {
                                    return None;
                                }
                                normals.push(d);
                            }
                        }
                    }
                }
            }
            let mut out = Vec::new();
            for c in per_child.into_iter().flatten() {
                push_unique(&mut out, c);
                if out.len() > CANDIDATE_CAP {
                    return None;
                }
            }
            Some(out)
        }
    }
}

/// Angles where some compared pair of planar gradients ties to first order.
fn critical_angles(node: &FnExpr, x: &[f64]) -> Option<Vec<f64>> {
    let mut normals = Vec::new();
    candidates(node, x, &mut normals)?;
    let tau = std::f64::consts::TAU;
    let mut angles: Vec<f64> = Vec::with_capacity(2 * normals.len());
    for d in &normals {
        let base = (d[1].atan2(d[0]) + std::f64::consts::FRAC_PI_2).rem_euclid(tau);
        angles.push(base);
        angles.push((base + std::f64::consts::PI).rem_euclid(tau));
    }
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
    Some(angles)
}

fn unit_at(angle: f64) -> Point {
    vec![angle.cos(), angle.sin()]
}

/// Resolve an outer estimate by ray analysis: exactly in 1-D, the Clarke
/// gradient exactly in 2-D, and a sampled consistency check otherwise.
fn refine(node: &FnExpr, x: &[f64], rough: Local) -> Result<Local> {
    match x.len() {
        1 => {
            let dp = ray(node, x, &[1.0]).c1;
            let dm = -ray(node, x, &[-1.0]).c1;
            let tol = 1e-12 * (1.0 + dp.abs() + dm.abs());
            if (dp - dm).abs() <= tol {
                return Ok(Local::smooth(rough.value, vec![dp]));
            }
            let clarke = SetRep::polytope(vec![vec![dm.min(dp)], vec![dm.max(dp)]])?;
            if dm <= dp {
                Ok(Local::regular_set(rough.value, clarke))
            } else {
                Ok(Local {
                    value: rough.value,
                    clarke,
                    limiting: SetRep::points(vec![vec![dm], vec![dp]])?,
                    clarke_exact: true,
                    limiting_exact: true,
                    regular: false,
                    strict: None,
                })
            }
        }
        2 => match critical_angles(node, x) {
            Some(angles) => {
                let mids: Vec<f64> = if angles.is_empty() {
                    (0..4).map(|k| k as f64 * std::f64::consts::FRAC_PI_2).collect()
                } else {
                    (0..angles.len())
                        .map(|i| {
                            let next = if i + 1 < angles.len() {
                                angles[i + 1]
                            } else {
                                angles[0] + std::f64::consts::TAU
                            };
                            0.5 * (angles[i] + next)
                        })
                        .collect()
                };
                let mut ess: Vec<Point> = Vec::new();
                for &m in &mids {
                    push_unique(&mut ess, ray(node, x, &unit_at(m)).grad);
                }
                let probes: Vec<f64> = angles.iter().chain(mids.iter()).cloned().collect();
                Ok(from_essential(node, x, rough, ess, &probes))
            }
            None => Ok(sampled_refine(node, x, rough)),
        },
        _ => Ok(sampled_refine(node, x, rough)),
    }
}

fn from_essential(node: &FnExpr, x: &[f64], rough: Local, ess: Vec<Point>, probes: &[f64]) -> Local {
    if ess.len() == 1 {
        return Local::smooth(rough.value, ess[0].clone());
    }
    let clarke = SetRep::polytope(ess).expect("nonempty gradient list");
    let regular = probes.iter().all(|&a| {
        let h = unit_at(a);
        let dd = ray(node, x, &h).c1;
        let s = clarke.support_raw(&h);
        dd >= s - 1e-10 * (1.0 + s.abs())
    });
    if regular {
        return Local::regular_set(rough.value, clarke);
    }
    Local {
        clarke,
        clarke_exact: true,
        ..rough
    }
}

fn sampled_refine(node: &FnExpr, x: &[f64], rough: Local) -> Local {
    let n = x.len();
    let mut dirs: Vec<Point> = default_directions(n, SAMPLED_RAYS, 0x5eed)
        .into_iter()
        .map(Point::from)
        .collect();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        dirs.push(e.clone());
        e[i] = -1.0;
        dirs.push(e);
    }
    let mut ess: Vec<Point> = Vec::new();
    for h in &dirs {
        push_unique(&mut ess, ray(node, x, h).grad);
    }
    let inner = SetRep::polytope(ess).expect("nonempty gradient list");
    let agree = default_directions(n, 256, 0xd1ec).iter().all(|h| {
        let a = inner.support_raw(h.as_slice());
        let b = rough.clarke.support_raw(h.as_slice());
        (a - b).abs() <= 1e-9 * (1.0 + b.abs())
    });
    if agree {
        Local {
            clarke_exact: true,
            ..rough
        }
    } else {
        rough
    }
}
