//! Set-valued integration over finite measure spaces and the Leibniz-rule checks.
//!
//! With finitely many atoms every integrable selector is a choice of one
//! point per atom, so the selector integral is an iterated Minkowski sum and
//! the support-function integral is the same sum after convexifying each atom.

use serde::{Deserialize, Serialize};

use crate::convexgeom::{default_directions, hausdorff_distance, Direction, SetRep};
use crate::error::{Error, Result};
use crate::linalg::{self, Point};
use crate::measure::MeasureSpace;
use crate::nonsmooth::{self, FnExpr};
use crate::report::{Report, SUPPORT_TOL};

/// One compact set per measure atom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MapJson", into = "MapJson")]
pub struct SetValuedMap {
    sets: Vec<SetRep>,
}

#[derive(Serialize, Deserialize)]
struct MapJson {
    sets: Vec<SetRep>,
}

impl TryFrom<MapJson> for SetValuedMap {
    type Error = Error;
    fn try_from(j: MapJson) -> Result<Self> {
        SetValuedMap::new(j.sets)
    }
}

impl From<SetValuedMap> for MapJson {
    fn from(m: SetValuedMap) -> Self {
        MapJson { sets: m.sets }
    }
}

impl SetValuedMap {
    pub fn new(sets: Vec<SetRep>) -> Result<Self> {
        let first = sets.first().ok_or_else(|| Error::invalid("set-valued map needs an atom"))?;
        let dim = first.dim();
        for s in &sets {
            Error::check_dim(dim, s.dim())?;
        }
        Ok(SetValuedMap { sets })
    }

    /// Evaluate `gamma` at every atom parameter of `m`.
    pub fn from_fn<F>(m: &MeasureSpace, mut gamma: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Result<SetRep>,
    {
        SetValuedMap::new(m.atoms().iter().map(|t| gamma(t)).collect::<Result<_>>()?)
    }

    pub fn sets(&self) -> &[SetRep] {
        &self.sets
    }

    pub fn dim(&self) -> usize {
        self.sets[0].dim()
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

/// The family `φ(·, ω_i)`, one expression per atom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntegrandJson", into = "IntegrandJson")]
pub struct Integrand {
    atoms: Vec<FnExpr>,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct IntegrandJson {
    atoms: Vec<FnExpr>,
}

impl TryFrom<IntegrandJson> for Integrand {
    type Error = Error;
    fn try_from(j: IntegrandJson) -> Result<Self> {
        Integrand::new(j.atoms)
    }
}

impl From<Integrand> for IntegrandJson {
    fn from(i: Integrand) -> Self {
        IntegrandJson { atoms: i.atoms }
    }
}

impl Integrand {
    pub fn new(atoms: Vec<FnExpr>) -> Result<Self> {
        let first = atoms.first().ok_or_else(|| Error::invalid("integrand needs an atom"))?;
        let dim = first.validate()?;
        for f in &atoms[1..] {
            Error::check_dim(dim, f.validate()?)?;
        }
        Ok(Integrand { atoms, dim })
    }

    pub fn from_fn<F>(m: &MeasureSpace, mut phi: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Result<FnExpr>,
    {
        Integrand::new(m.atoms().iter().map(|t| phi(t)).collect::<Result<_>>()?)
    }

    pub fn atoms(&self) -> &[FnExpr] {
        &self.atoms
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Uniform Lipschitz modulus of the family on a box.
    pub fn lipschitz_modulus(&self, lo: &[f64], hi: &[f64]) -> Result<f64> {
        self.atoms
            .iter()
            .try_fold(0.0f64, |m, f| Ok(m.max(f.lipschitz_modulus(lo, hi)?)))
    }
}

fn check_atoms(n: usize, m: &MeasureSpace) -> Result<()> {
    if n != m.len() {
        return Err(Error::invalid(format!(
            "map has {n} atoms but the measure has {}",
            m.len()
        )));
    }
    Ok(())
}

/// Directions used when the caller supplies none.
pub fn check_directions(dim: usize) -> Vec<Direction> {
    let count = if dim <= 2 { 64 } else { 256 };
    default_directions(dim, count, 0x5eed)
}

/// `I_φ = Σ w_i φ(·, ω_i)` as a single expression.
pub fn integral_functional(phi: &Integrand, m: &MeasureSpace) -> Result<FnExpr> {
    check_atoms(phi.len(), m)?;
    let terms = phi
        .atoms
        .iter()
        .zip(m.weights())
        .map(|(f, &w)| FnExpr::scale(w, f.clone()))
        .collect::<Result<Vec<_>>>()?;
    FnExpr::sum(terms)
}

/// Selector integral `{Σ w_i s_i : s_i ∈ Γ(ω_i)}`.
pub fn aumann_integral(gamma: &SetValuedMap, m: &MeasureSpace) -> Result<SetRep> {
    check_atoms(gamma.len(), m)?;
    let mut acc = SetRep::origin(gamma.dim());
    for (s, &w) in gamma.sets.iter().zip(m.weights()) {
        acc = acc.minkowski_sum(&s.scale(w)).map_err(|e| match e {
            Error::Capacity { needed, cap, .. } => Error::Capacity {
                what: "selector integral pieces",
                needed,
                cap,
                advice: "use wstar_integral, which convexifies each atom first",
            },
            other => other,
        })?;
    }
    Ok(acc)
}

/// Convex set whose support function is `Σ w_i s(·, Γ(ω_i))`.
pub fn wstar_integral(gamma: &SetValuedMap, m: &MeasureSpace) -> Result<SetRep> {
    check_atoms(gamma.len(), m)?;
    let mut acc = SetRep::origin(gamma.dim());
    for (s, &w) in gamma.sets.iter().zip(m.weights()) {
        acc = acc.minkowski_sum(&s.convexify().scale(w))?.convexify();
    }
    Ok(acc)
}

pub fn check_supremum_representation(
    gamma: &SetValuedMap,
    m: &MeasureSpace,
    dirs: &[Direction],
) -> Result<Report> {
    let integral = aumann_integral(gamma, m)?;
    let mut rep = Report::new("supremum_representation");
    for h in dirs {
        let mut lhs = 0.0;
        for (s, &w) in gamma.sets.iter().zip(m.weights()) {
            lhs += w * s.support(h)?;
        }
        let rhs = integral.support(h)?;
        rep.residual((lhs - rhs).abs(), SUPPORT_TOL * (1.0 + rhs.abs()));
    }
    Ok(rep)
}

/// Gap between selector and convexified integrals along a refinement sequence.
pub fn check_lyapunov_convexification<F>(
    family: F,
    ns: &[usize],
    dirs: &[Direction],
) -> Result<Report>
where
    F: Fn(usize) -> Result<(SetValuedMap, MeasureSpace)>,
{
    let mut rep = Report::new("lyapunov_convexification");
    let mut gaps: Vec<(usize, f64)> = Vec::new();
    for &n in ns {
        let (gamma, m) = family(n)?;
        let a = aumann_integral(&gamma, &m)?;
        let w = wstar_integral(&gamma, &m)?;
        let d = hausdorff_distance(&a, &w, dirs)?;
        rep.per_direction.push(d);
        rep.max_residual = rep.max_residual.max(d);
        gaps.push((n, d));
    }
    for pair in gaps.windows(2) {
        let ((n0, d0), (n1, d1)) = (pair[0], pair[1]);
        if d1 > d0 + 1e-12 {
            rep.fail(format!("gap grew from {d0:e} at N={n0} to {d1:e} at N={n1}"));
        }
    }
    for &(n, d) in &gaps {
        if d <= 1e-12 {
            continue;
        }
        if let Some(&(_, d2)) = gaps.iter().find(|(k, _)| *k == 2 * n) {
            if d2 > 0.75 * d + 1e-12 {
                rep.fail(format!("doubling N={n} shrank the gap only to {d2:e} from {d:e}"));
            }
        }
    }
    rep.extra(
        "gaps",
        gaps.iter()
            .map(|(n, d)| serde_json::json!({"n": n, "gap": d}))
            .collect::<Vec<_>>(),
    );
    Ok(rep)
}

fn atom_sets<F>(phi: &Integrand, x: &[f64], mut pick: F) -> Result<(SetValuedMap, bool, bool)>
where
    F: FnMut(&nonsmooth::Analysis) -> (SetRep, bool),
{
    let mut sets = Vec::with_capacity(phi.len());
    let mut exact = true;
    let mut regular = true;
    for f in &phi.atoms {
        let a = nonsmooth::analyze(f, x)?;
        let (s, e) = pick(&a);
        exact &= e;
        regular &= a.clarke.regular;
        sets.push(s);
    }
    Ok((SetValuedMap::new(sets)?, exact, regular))
}

/// Clarke gradient of `I_φ` against the integral of atom-wise Clarke gradients.
pub fn clarke_leibniz_check(
    phi: &Integrand,
    m: &MeasureSpace,
    x: &[f64],
    dirs: &[Direction],
) -> Result<Report> {
    check_atoms(phi.len(), m)?;
    let i_phi = integral_functional(phi, m)?;
    let lhs = nonsmooth::clarke_gradient(&i_phi, x, false)?;
    let (atoms, exact, all_regular) =
        atom_sets(phi, x, |a| (a.clarke.set.clone(), a.clarke.exact))?;
    let rhs = wstar_integral(&atoms, m)?;
    let mut rep = Report::new("clarke_leibniz");
    if !exact {
        rep.warn("some atom Clarke gradient is an outer estimate; equality not tested");
    }
    if !lhs.exact {
        rep.warn("Clarke gradient of the integral functional is an outer estimate");
    }
    if !nonsmooth::exactness_certified(&i_phi) {
        rep.warn("integral functional lies outside the structurally certified class");
    }
    let test_equality = exact && lhs.exact && all_regular;
    let mut max_gap = 0.0f64;
    let mut eq_residual = 0.0f64;
    for h in dirs {
        let l = lhs.set.support(h)?;
        let r = rhs.support(h)?;
        let tol = SUPPORT_TOL * (1.0 + r.abs());
        rep.residual((l - r).max(0.0), tol);
        max_gap = max_gap.max(r - l);
        eq_residual = eq_residual.max((l - r).abs());
        if test_equality && (l - r).abs() > tol {
            rep.pass = false;
        }
    }
    if test_equality && eq_residual > SUPPORT_TOL {
        rep.warn("all atoms regular but the inclusion is strict");
    }
    rep.extra("all_regular", all_regular);
    rep.extra("equality_tested", test_equality);
    rep.extra("equality_residual", eq_residual);
    rep.extra("max_gap", max_gap);
    rep.extra("lhs", &lhs.set);
    rep.extra("rhs", &rhs);
    Ok(rep)
}

/// `Σ w_i ∇φ(x̄, ω_i)`, verified against the strict derivative of `I_φ`.
pub fn strict_leibniz(phi: &Integrand, m: &MeasureSpace, x: &[f64]) -> Result<Point> {
    check_atoms(phi.len(), m)?;
    let mut acc = vec![0.0; phi.dim()];
    for (i, (f, &w)) in phi.atoms.iter().zip(m.weights()).enumerate() {
        let g = nonsmooth::strict_derivative(f, x)?.ok_or_else(|| {
            Error::Inapplicable(format!("atom {i} is not strictly differentiable at the point"))
        })?;
        linalg::axpy(&mut acc, w, &g);
    }
    let whole = nonsmooth::strict_derivative(&integral_functional(phi, m)?, x)?.ok_or_else(|| {
        Error::Internal("integral functional lost strict differentiability".into())
    })?;
    let gap = linalg::norm_inf(&linalg::sub(&acc, &whole));
    if gap > 1e-10 * (1.0 + linalg::norm_inf(&whole)) {
        return Err(Error::Numerical(format!(
            "weighted gradient sum differs from the strict derivative by {gap:e}"
        )));
    }
    Ok(acc)
}

/// Limiting subdifferential of `I_φ` against raw and convexified integrals
/// of atom-wise limiting sets, along a refinement sequence.
pub fn limiting_leibniz_check<F>(
    family: F,
    x: &[f64],
    dirs: &[Direction],
    ns: &[usize],
) -> Result<Report>
where
    F: Fn(usize) -> Result<(Integrand, MeasureSpace)>,
{
    let mut rep = Report::new("limiting_leibniz");
    let mut prev_dist: Option<f64> = None;
    let mut stages = Vec::new();
    for &n in ns {
        let (phi, m) = family(n)?;
        check_atoms(phi.len(), &m)?;
        let lhs = nonsmooth::limiting_subdiff(&integral_functional(&phi, &m)?, x, false)?;
        let (atoms, exact, all_regular) =
            atom_sets(&phi, x, |a| (a.limiting.set.clone(), a.limiting.exact))?;
        if !exact || !lhs.exact {
            rep.warn(format!("N={n}: outer estimates involved"));
        }
        let convex = wstar_integral(&atoms, &m)?;
        // (a) inclusion in the convexified integral
        let mut inc = 0.0f64;
        for v in lhs.set.vertices() {
            inc = inc.max(convex.distance_to(v)?);
        }
        rep.residual(inc, SUPPORT_TOL);
        // (b) distance to the raw selector integral, bounded by the convexification gap
        let mut stage = serde_json::json!({"n": n, "inclusion": inc});
        match aumann_integral(&atoms, &m) {
            Ok(raw) => {
                let mut dist = 0.0f64;
                for v in lhs.set.vertices() {
                    dist = dist.max(raw.distance_to(v)?);
                }
                let gap = hausdorff_distance(&raw, &convex, dirs)?;
                if dist > gap + SUPPORT_TOL {
                    rep.fail(format!("N={n}: raw distance {dist:e} exceeds convexification gap {gap:e}"));
                }
                if let Some(p) = prev_dist {
                    if dist > p + SUPPORT_TOL {
                        rep.fail(format!("N={n}: raw distance grew from {p:e} to {dist:e}"));
                    }
                }
                prev_dist = Some(dist);
                stage["raw_distance"] = dist.into();
                stage["convexification_gap"] = gap.into();
            }
            Err(Error::Capacity { .. }) => {
                rep.warn(format!("N={n}: selector integral too large, raw comparison skipped"));
            }
            Err(e) => return Err(e),
        }
        // (c) equality when every atom is regular
        if all_regular && exact && lhs.exact {
            let hull = lhs.set.convexify();
            for h in dirs {
                let l = hull.support(h)?;
                let r = convex.support(h)?;
                if (l - r).abs() > SUPPORT_TOL * (1.0 + r.abs()) {
                    rep.fail(format!("N={n}: regular atoms but support gap {:e}", (l - r).abs()));
                    break;
                }
            }
        }
        stages.push(stage);
    }
    rep.extra("stages", stages);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::uniform_discretization;

    fn pts(v: &[f64]) -> SetRep {
        SetRep::points(v.iter().map(|x| vec![*x]).collect()).unwrap()
    }

    fn interval(a: f64, b: f64) -> SetRep {
        SetRep::polytope(vec![vec![a], vec![b]]).unwrap()
    }

    fn half_half() -> MeasureSpace {
        MeasureSpace::discrete(&[0.25, 0.75], &[0.5, 0.5]).unwrap()
    }

    #[test]
    fn integral_functional_examples() {
        let m = uniform_discretization(2, 0.0, 1.0).unwrap();
        let phi = Integrand::from_fn(&m, |t| Ok(FnExpr::abs_shifted(t[0]))).unwrap();
        let i = integral_functional(&phi, &m).unwrap();
        assert!((i.eval(&[0.5]) - 0.25).abs() < 1e-15);
        let sq = Integrand::from_fn(&m, |_| Ok(FnExpr::square_shifted(0.0))).unwrap();
        let i = integral_functional(&sq, &m).unwrap();
        assert!((i.eval(&[3.0]) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn aumann_examples() {
        let m = half_half();
        let g = SetValuedMap::new(vec![pts(&[-1.0, 1.0]), pts(&[-1.0, 1.0])]).unwrap();
        let a = aumann_integral(&g, &m).unwrap();
        let mut v: Vec<f64> = a.vertices().map(|p| p[0]).collect();
        v.sort_by(f64::total_cmp);
        assert_eq!(v, vec![-1.0, 0.0, 1.0]);
        let c = SetValuedMap::new(vec![interval(0.0, 1.0), interval(0.0, 1.0)]).unwrap();
        assert_eq!(aumann_integral(&c, &m).unwrap(), interval(0.0, 1.0));
        let s = SetValuedMap::new(vec![pts(&[2.0]), pts(&[2.0])]).unwrap();
        assert_eq!(aumann_integral(&s, &m).unwrap(), pts(&[2.0]));
    }

    #[test]
    fn wstar_examples() {
        let m = half_half();
        let g = SetValuedMap::new(vec![pts(&[-1.0, 1.0]), pts(&[-1.0, 1.0])]).unwrap();
        assert_eq!(wstar_integral(&g, &m).unwrap(), interval(-1.0, 1.0));
        let tri = SetRep::polytope(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let g2 = SetValuedMap::new(vec![tri.clone(), tri.clone()]).unwrap();
        let w = wstar_integral(&g2, &m).unwrap();
        for h in check_directions(2) {
            assert!((w.support(&h).unwrap() - tri.support(&h).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn supremum_representation_on_two_points() {
        let g = SetValuedMap::new(vec![pts(&[-1.0, 1.0]), pts(&[-1.0, 1.0])]).unwrap();
        let r = check_supremum_representation(&g, &half_half(), &check_directions(1)).unwrap();
        assert!(r.pass);
        assert_eq!(r.max_residual, 0.0);
    }

    #[test]
    fn lyapunov_gap_halves() {
        let family = |n| {
            let m = uniform_discretization(n, 0.0, 1.0)?;
            Ok((SetValuedMap::from_fn(&m, |_| SetRep::points(vec![vec![0.0], vec![1.0]]))?, m))
        };
        let r = check_lyapunov_convexification(family, &[1, 2, 4, 8], &check_directions(1)).unwrap();
        assert!(r.pass, "{:?}", r.warnings);
        for (d, n) in r.per_direction.iter().zip([1.0, 2.0, 4.0, 8.0]) {
            assert!((d - 0.5 / n).abs() < 1e-12);
        }
    }

    #[test]
    fn lyapunov_convex_valued_has_no_gap() {
        let family = |n| {
            let m = uniform_discretization(n, 0.0, 1.0)?;
            Ok((SetValuedMap::from_fn(&m, |t| SetRep::polytope(vec![vec![0.0], vec![t[0]]]))?, m))
        };
        let r = check_lyapunov_convexification(family, &[1, 2, 4], &check_directions(1)).unwrap();
        assert!(r.pass);
        assert_eq!(r.max_residual, 0.0);
    }

    #[test]
    fn clarke_leibniz_convex_equality() {
        let m = uniform_discretization(2, 0.0, 1.0).unwrap();
        let phi = Integrand::from_fn(&m, |t| Ok(FnExpr::abs_shifted(t[0]))).unwrap();
        let r = clarke_leibniz_check(&phi, &m, &[0.5], &check_directions(1)).unwrap();
        assert!(r.pass);
        assert_eq!(r.extras["equality_tested"], true);
        assert_eq!(r.extras["lhs"], serde_json::to_value(SetRep::singleton(vec![0.0])).unwrap());
    }

    #[test]
    fn strict_leibniz_examples() {
        let m = uniform_discretization(2, 0.0, 1.0).unwrap();
        let phi = Integrand::from_fn(&m, |t| Ok(FnExpr::square_shifted(t[0]))).unwrap();
        let g = strict_leibniz(&phi, &m, &[0.0]).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-12);
        let lin = Integrand::from_fn(&m, |t| Ok(FnExpr::affine(vec![t[0]], 0.0))).unwrap();
        assert!((strict_leibniz(&lin, &m, &[3.0]).unwrap()[0] - 0.5).abs() < 1e-15);
        let kinked = Integrand::from_fn(&m, |t| Ok(FnExpr::abs_shifted(t[0]))).unwrap();
        assert!(matches!(
            strict_leibniz(&kinked, &m, &[0.25]),
            Err(Error::Inapplicable(_))
        ));
    }

    #[test]
    fn limiting_leibniz_mixed_atoms() {
        // smooth atom plus one -|x - t| atom sitting at the point
        let family = |_n: usize| {
            let m = MeasureSpace::discrete(&[0.0, 0.3], &[0.4, 0.6])?;
            let phi = Integrand::new(vec![
                FnExpr::square_shifted(1.0),
                FnExpr::neg(FnExpr::abs_shifted(0.3)),
            ])?;
            Ok((phi, m))
        };
        let r = limiting_leibniz_check(family, &[0.3], &check_directions(1), &[1]).unwrap();
        assert!(r.pass, "{:?}", r.warnings);
        let l = nonsmooth::limiting_subdiff(
            &integral_functional(&family(1).unwrap().0, &family(1).unwrap().1).unwrap(),
            &[0.3],
            true,
        )
        .unwrap();
        let shift = 0.4 * 2.0 * (0.3 - 1.0);
        let mut v: Vec<f64> = l.set.vertices().map(|p| p[0]).collect();
        v.sort_by(f64::total_cmp);
        assert!((v[0] - (shift - 0.6)).abs() < 1e-12 && (v[1] - (shift + 0.6)).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let g = SetValuedMap::new(vec![pts(&[-1.0, 1.0])]).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(serde_json::from_str::<SetValuedMap>(&s).unwrap(), g);
        let phi = Integrand::new(vec![FnExpr::abs_shifted(0.0)]).unwrap();
        let s = serde_json::to_string(&phi).unwrap();
        assert_eq!(serde_json::from_str::<Integrand>(&s).unwrap(), phi);
        assert!(serde_json::from_str::<Integrand>(r#"{"atoms":[]}"#).is_err());
    }
}
