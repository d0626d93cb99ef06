//! Executes one validated scenario.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{json, Value};

use crate::convexgeom::{hausdorff_distance, Direction, SetRep};
use crate::dp::{
    default_radius, envelope_check, euler_inclusion_residual, euler_residual_at, finite_horizon_oracle,
    lagrange_multiplier_set, limiting_euler_check, mfcq_check, nlp_value_subdiff_check, solve,
    strict_value_derivative_check, Solution,
};
use crate::error::{Error, Result};
use crate::linalg::{self, Point};
use crate::measure::uniform_discretization;
use crate::nonsmooth::{self, oracle, FnExpr};
use crate::report::Report;
use crate::setintegral::{
    aumann_integral, check_directions, check_lyapunov_convexification, check_supremum_representation,
    clarke_leibniz_check, integral_functional, limiting_leibniz_check, strict_leibniz, wstar_integral,
    Integrand, SetValuedMap,
};

use super::scenario::{
    DpCheck, DpInputs, EulerInputs, GeometryInputs, IntegralInputs, Job, LeibnizInputs, LyapunovInputs,
    NlpInputs, Payload, Shape, Tolerances,
};
use super::{CheckEntry, ScenarioReport, Status, Table};

const ORACLE_RADIUS: f64 = 1e-3;
const ORACLE_SAMPLES: usize = 2000;
const FD_STEP: f64 = 1e-5;

pub(super) struct Output {
    pub report: ScenarioReport,
    pub tables: Vec<Table>,
    pub capacity: bool,
}

/// Short description of the result each check exercises.
fn paper_ref(check: &str) -> &'static str {
    match check {
        "minkowski_support" => "support function of a Minkowski sum",
        "hull_support" => "support function of the closed convex hull",
        "hausdorff" => "Hausdorff distance through support functions",
        "supremum_representation" => "supremum representation of the set integral",
        "aumann_hull" => "convexified selector integral equals the support-function integral",
        "lyapunov_convexification" | "gap_formula" => "Lyapunov convexification under refinement",
        "limiting_subdiff" => "limiting subdifferential of the integral functional",
        "clarke_gradient" => "Clarke gradient of the integral functional",
        "clarke_convexification" => "Clarke gradient as the hull of the limiting subdifferential",
        "clarke_leibniz" => "Clarke Leibniz rule, inclusion and regular equality case",
        "strict_inclusion_gap" => "Clarke Leibniz rule, strict inclusion without regularity",
        "strict_leibniz" | "strict_leibniz_fd" => "Leibniz rule for strictly differentiable integrands",
        "oracle_bound" => "generalized directional derivative as a limsup of difference quotients",
        "limiting_leibniz" => "Leibniz rule for limiting subdifferentials",
        "fixed_point" | "expected_value" => "Bellman equation and contraction fixed point",
        "finite_horizon" => "finite-horizon truncation of the Bellman fixed point",
        "envelope" => "envelope inclusion for the value function",
        "strict_value_derivative" => "envelope formula under strict differentiability",
        "euler_inclusion" => "stochastic Euler inclusion",
        "euler_perturbed" => "stochastic Euler inclusion rejects a non-optimal control",
        "limiting_euler" | "raw_dominates_convexified" => "limiting Euler inclusion with the raw set integral",
        "x_star_candidates" => "state-side multiplier of the limiting Euler inclusion",
        "mfcq" => "Mangasarian-Fromovitz constraint qualification",
        "multiplier_set" | "nlp_value_subdiff" => "value subdifferential through Lagrange multipliers",
        _ => "runner diagnostics",
    }
}

struct Ctx {
    tol: Tolerances,
    checks: Vec<CheckEntry>,
    tables: Vec<Table>,
    capacity: bool,
    name: String,
}

fn entry(name: &str, pass: bool, residual: f64, status: Status, details: Value) -> CheckEntry {
    CheckEntry {
        name: name.to_string(),
        paper_ref: paper_ref(name).to_string(),
        pass,
        residual: residual.is_finite().then_some(residual),
        hypotheses: BTreeMap::new(),
        status,
        warnings: Vec::new(),
        details,
    }
}

fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

impl Ctx {
    fn push(&mut self, name: &str, pass: bool, residual: f64, details: Value) {
        let status = if pass { Status::Pass } else { Status::Fail };
        self.checks.push(entry(name, pass, residual, status, details));
    }

    fn telemetry(&mut self, name: &str, details: Value) {
        self.checks.push(entry(name, true, 0.0, Status::Telemetry, details));
    }

    fn report(&mut self, name: &str, rep: Report) {
        let status = if rep.pass {
            Status::Pass
        } else if rep.hypothesis_violation() {
            Status::HypothesisViolation
        } else {
            Status::Fail
        };
        let details = if rep.extras.is_empty() {
            Value::Null
        } else {
            to_value(&rep.extras)
        };
        let mut e = entry(name, rep.pass, rep.max_residual, status, details);
        e.hypotheses = rep.hypotheses;
        e.warnings = rep.warnings;
        self.checks.push(e);
    }

    fn error(&mut self, name: &str, err: Error) {
        self.capacity |= matches!(err, Error::Capacity { .. });
        let mut e = entry(name, false, f64::NAN, Status::Error, Value::Null);
        e.warnings.push(err.to_string());
        self.checks.push(e);
    }

    fn attempt<T>(&mut self, name: &str, r: Result<T>) -> Option<T> {
        r.map_err(|e| self.error(name, e)).ok()
    }

    fn table(&mut self, suffix: &str, header: &[&str], rows: Vec<Vec<String>>) {
        let file = if suffix.is_empty() {
            self.name.clone()
        } else {
            format!("{}-{suffix}", self.name)
        };
        self.tables.push(Table {
            file,
            header: header.iter().map(|h| h.to_string()).collect(),
            rows,
        });
    }
}

pub(super) fn execute(job: &Job, tol_scale: f64) -> Output {
    let s = &job.scenario;
    let mut ctx = Ctx {
        tol: s.tolerances.scaled(tol_scale),
        checks: Vec::new(),
        tables: Vec::new(),
        capacity: false,
        name: s.name.clone(),
    };
    match &job.payload {
        Payload::Geometry(g) => geometry(&mut ctx, g),
        Payload::Integral(i) => integral(&mut ctx, i),
        Payload::Leibniz(l) => leibniz(&mut ctx, l, &s.refinement, s.seed),
        Payload::Lyapunov(l) => lyapunov(&mut ctx, l, &s.refinement),
        Payload::Dp(d) => dp(&mut ctx, d, &s.refinement),
        Payload::Euler(e) => euler(&mut ctx, e),
        Payload::Nlp(n) => nlp(&mut ctx, n),
    }
    let pass = ctx.checks.iter().all(|c| c.pass || c.status == Status::Telemetry);
    Output {
        report: ScenarioReport {
            scenario: s.name.clone(),
            kind: s.kind,
            pass,
            seed: s.seed,
            checks: ctx.checks,
        },
        tables: ctx.tables,
        capacity: ctx.capacity,
    }
}

/// `max_h |s(a, h) - s(b, h)|`, relative to `1 + |s(b, h)|`.
fn support_gap(a: &SetRep, b: &SetRep, dirs: &[Direction]) -> Result<f64> {
    let mut worst = 0.0f64;
    for h in dirs {
        let (sa, sb) = (a.support(h)?, b.support(h)?);
        worst = worst.max((sa - sb).abs() / (1.0 + sb.abs()));
    }
    Ok(worst)
}

fn geometry(ctx: &mut Ctx, g: &GeometryInputs) {
    let dirs = check_directions(g.a.dim());
    let sum = ctx.attempt("minkowski_support", g.a.minkowski_sum(&g.b));
    if let Some(sum) = sum {
        let r = (|| {
            let mut worst = 0.0f64;
            for h in &dirs {
                let expect = g.a.support(h)? + g.b.support(h)?;
                worst = worst.max((sum.support(h)? - expect).abs() / (1.0 + expect.abs()));
            }
            Ok(worst)
        })();
        if let Some(r) = ctx.attempt("minkowski_support", r) {
            let tol = ctx.tol.support;
            ctx.push("minkowski_support", r <= tol, r, json!({ "pieces": sum.pieces().len() }));
        }
    }
    if let Some(r) = ctx.attempt("hull_support", support_gap(&g.a.convexify(), &g.a, &dirs)) {
        let tol = ctx.tol.support;
        ctx.push("hull_support", r <= tol, r, Value::Null);
    }
    if let Some(d) = ctx.attempt("hausdorff", hausdorff_distance(&g.a, &g.b, &dirs)) {
        match g.expect_hausdorff {
            Some(e) => {
                let r = (d - e).abs();
                let tol = ctx.tol.exact;
                ctx.push("hausdorff", r <= tol, r, json!({ "distance": d, "expected": e }));
            }
            None => ctx.telemetry("hausdorff", json!({ "distance": d })),
        }
    }
}

fn integral(ctx: &mut Ctx, i: &IntegralInputs) {
    let dirs = check_directions(i.map.dim());
    if let Some(rep) = ctx.attempt(
        "supremum_representation",
        check_supremum_representation(&i.map, &i.measure, &dirs),
    ) {
        ctx.report("supremum_representation", rep);
    }
    let hull_gap = (|| {
        let a = aumann_integral(&i.map, &i.measure)?;
        let w = wstar_integral(&i.map, &i.measure)?;
        Ok((hausdorff_distance(&a.convexify(), &w, &dirs)?, a.vertex_count(), w))
    })();
    if let Some((d, count, w)) = ctx.attempt("aumann_hull", hull_gap) {
        let tol = ctx.tol.support;
        ctx.push(
            "aumann_hull",
            d <= tol,
            d,
            json!({ "selector_points": count, "wstar": to_value(&w) }),
        );
    }
}

fn family_atom(shape: Shape, t: f64) -> FnExpr {
    match shape {
        Shape::Abs => FnExpr::abs_shifted(t),
        Shape::NegAbs => FnExpr::neg(FnExpr::abs_shifted(t)),
        Shape::Square => FnExpr::square_shifted(t),
    }
}

fn leibniz(ctx: &mut Ctx, l: &LeibnizInputs, refinement: &[usize], seed: Option<u64>) {
    let dirs = check_directions(l.x.len());
    if let Some(f) = &l.family {
        let (a, b) = (f.interval[0], f.interval[1]);
        let family = |n: usize| {
            let m = uniform_discretization(n, a, b)?;
            let phi = Integrand::from_fn(&m, |t| Ok(family_atom(f.shape, t[0])))?;
            Ok((phi, m))
        };
        if let Some(rep) = ctx.attempt(
            "limiting_leibniz",
            limiting_leibniz_check(family, &l.x, &dirs, refinement),
        ) {
            let rows = rep
                .extras
                .get("stages")
                .and_then(Value::as_array)
                .map(|stages| {
                    stages
                        .iter()
                        .map(|s| {
                            ["n", "inclusion", "raw_distance", "convexification_gap"]
                                .iter()
                                .map(|k| s.get(*k).map(|v| v.to_string()).unwrap_or_default())
                                .collect()
                        })
                        .collect()
                })
                .unwrap_or_default();
            ctx.table("", &["n", "inclusion", "raw_distance", "convexification_gap"], rows);
            ctx.report("limiting_leibniz", rep);
        }
        return;
    }
    let (Some(phi), Some(m)) = (&l.integrand, &l.measure) else {
        return;
    };
    let Some(i_phi) = ctx.attempt("limiting_subdiff", integral_functional(phi, m)) else {
        return;
    };
    let Some(an) = ctx.attempt("limiting_subdiff", nonsmooth::analyze(&i_phi, &l.x)) else {
        return;
    };

    for (name, got, expect) in [
        ("limiting_subdiff", &an.limiting, &l.expect_limiting),
        ("clarke_gradient", &an.clarke, &l.expect_clarke),
    ] {
        let details = json!({ "set": to_value(&got.set), "exact": got.exact, "regular": got.regular });
        match expect {
            Some(e) => {
                if let Some(d) = ctx.attempt(name, hausdorff_distance(&got.set, e, &dirs)) {
                    let tol = ctx.tol.exact;
                    ctx.push(name, got.exact && d <= tol, d, details);
                }
            }
            None => ctx.telemetry(name, details),
        }
    }

    let hull = an.limiting.set.convexify();
    if let Some(r) = ctx.attempt("clarke_convexification", support_gap(&an.clarke.set, &hull, &dirs)) {
        if an.clarke.exact && an.limiting.exact {
            let tol = ctx.tol.exact;
            ctx.push("clarke_convexification", r <= tol, r, Value::Null);
        } else {
            ctx.telemetry("clarke_convexification", json!({ "support_gap": r, "note": "outer estimates" }));
        }
    }

    if let Some(rep) = ctx.attempt("clarke_leibniz", clarke_leibniz_check(phi, m, &l.x, &dirs)) {
        let gap = rep.extras.get("max_gap").and_then(Value::as_f64).unwrap_or(0.0);
        ctx.report("clarke_leibniz", rep);
        if let Some(min) = l.min_gap {
            ctx.push(
                "strict_inclusion_gap",
                gap >= min,
                (min - gap).max(0.0),
                json!({ "max_gap": gap, "min_gap": min }),
            );
        }
    }

    if phi.atoms().iter().all(FnExpr::is_smooth) {
        let strict = (|| {
            let sum = strict_leibniz(phi, m, &l.x)?;
            let d = nonsmooth::strict_derivative(&i_phi, &l.x)?
                .ok_or_else(|| Error::Internal("smooth integrand without strict derivative".into()))?;
            Ok((sum, d))
        })();
        if let Some((sum, d)) = ctx.attempt("strict_leibniz", strict) {
            let r = linalg::norm_inf(&linalg::sub(&sum, &d));
            let tol = ctx.tol.strict;
            ctx.push("strict_leibniz", r <= tol, r, json!({ "gradient": sum }));
            let fd = oracle::central_gradient(|z| i_phi.eval(z), &l.x, FD_STEP);
            let r = linalg::norm_inf(&linalg::sub(&sum, &fd));
            let tol = ctx.tol.fd * (1.0 + linalg::norm_inf(&sum));
            ctx.push("strict_leibniz_fd", r <= tol, r, json!({ "finite_difference": fd }));
        }
    }

    if l.oracle {
        let seed = seed.expect("validated: oracle scenarios carry a seed");
        if let Some((excess, bound)) = ctx.attempt("oracle_bound", oracle_excess(&i_phi, &l.x, &dirs, seed)) {
            ctx.push(
                "oracle_bound",
                excess <= 0.0,
                excess.max(0.0),
                json!({ "radius": ORACLE_RADIUS, "samples": ORACLE_SAMPLES, "slack": bound }),
            );
        }
    }
}

/// Largest amount by which sampled quotients exceed the Clarke derivative
/// plus the `1e-6 + L r` slack, over all directions.
fn oracle_excess(f: &FnExpr, x: &[f64], dirs: &[Direction], seed: u64) -> Result<(f64, f64)> {
    let lo: Point = x.iter().map(|v| v - 2.0).collect();
    let hi: Point = x.iter().map(|v| v + 2.0).collect();
    let slack = 1e-6 + f.lipschitz_modulus(&lo, &hi)? * ORACLE_RADIUS;
    let mut worst = f64::NEG_INFINITY;
    for (k, h) in dirs.iter().enumerate() {
        let sampled = oracle::sampled_clarke_dd(f, x, h, ORACLE_RADIUS, ORACLE_SAMPLES, seed.wrapping_add(k as u64))?;
        let exact = nonsmooth::clarke_dd(f, x, h, false)?;
        worst = worst.max(sampled - exact - slack);
    }
    Ok((worst, slack))
}

fn lyapunov(ctx: &mut Ctx, l: &LyapunovInputs, refinement: &[usize]) {
    let dirs = check_directions(l.set.dim());
    let (a, b) = (l.interval[0], l.interval[1]);
    let family = |n: usize| {
        let m = uniform_discretization(n, a, b)?;
        Ok((SetValuedMap::new(vec![l.set.clone(); n])?, m))
    };
    let Some(rep) = ctx.attempt(
        "lyapunov_convexification",
        check_lyapunov_convexification(family, refinement, &dirs),
    ) else {
        return;
    };
    let gaps: Vec<(f64, f64)> = rep
        .extras
        .get("gaps")
        .and_then(Value::as_array)
        .map(|g| {
            g.iter()
                .filter_map(|e| Some((e.get("n")?.as_f64()?, e.get("gap")?.as_f64()?)))
                .collect()
        })
        .unwrap_or_default();
    ctx.report("lyapunov_convexification", rep);
    let expected = |n: f64| l.expected_gap_coeff.map(|c| c * (b - a) / n);
    let rows = gaps
        .iter()
        .map(|&(n, g)| vec![fmt(n), fmt(g), expected(n).map(fmt).unwrap_or_default()])
        .collect();
    ctx.table("", &["n", "gap", "expected"], rows);
    if l.expected_gap_coeff.is_some() {
        let r = gaps
            .iter()
            .map(|&(n, g)| (g - expected(n).unwrap_or(0.0)).abs())
            .fold(0.0, f64::max);
        let tol = ctx.tol.exact;
        ctx.push("gap_formula", r <= tol, r, json!({ "coeff": l.expected_gap_coeff }));
    }
}

fn value_table(ctx: &mut Ctx, sol: &Solution) {
    let model = &sol.model;
    let n = model.dim();
    let mut header: Vec<String> = vec!["shock".into()];
    header.extend((0..n).map(|d| format!("x{}", d + 1)));
    header.push("v".into());
    let mut rows = Vec::new();
    for (w, vw) in sol.values.v.iter().enumerate() {
        for (i, v) in vw.iter().enumerate() {
            let mut row = vec![w.to_string()];
            row.extend(model.state(i).iter().map(|c| fmt(*c)));
            row.push(fmt(*v));
            rows.push(row);
        }
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    ctx.table("values", &header, rows);
}

fn dp(ctx: &mut Ctx, d: &DpInputs, refinement: &[usize]) {
    let model = &d.model.model;
    let Some(sol) = ctx.attempt("fixed_point", solve(model, d.vi_tol)) else {
        return;
    };
    let i = model.state_index(&d.x).expect("validated grid state");
    let v = sol.values.v[d.w][i];
    let dirs = check_directions(model.dim());
    value_table(ctx, &sol);
    for check in &d.checks {
        match check {
            DpCheck::FixedPoint => {
                let r = sol.values.fixed_point_residual;
                let tol = ctx.tol.value;
                ctx.push(
                    "fixed_point",
                    r <= tol,
                    r,
                    json!({
                        "iterations": sol.values.iterations,
                        "value": v,
                        "closed_form_exact": sol.values.closed_form_exact,
                        "closed_form_residual": sol.values.closed_form_residual,
                    }),
                );
                if let Some(e) = d.expect_value {
                    let r = (v - e).abs();
                    ctx.push("expected_value", r <= tol, r, json!({ "value": v, "expected": e }));
                }
            }
            DpCheck::FiniteHorizon => finite_horizon(ctx, &sol, d, v, refinement),
            DpCheck::Envelope => {
                if let Some(rep) = ctx.attempt("envelope", envelope_check(&sol, &d.x, d.w, &dirs)) {
                    ctx.report("envelope", rep);
                }
            }
            DpCheck::StrictDerivative => {
                if let Some(rep) =
                    ctx.attempt("strict_value_derivative", strict_value_derivative_check(&sol, &d.x, d.w))
                {
                    ctx.report("strict_value_derivative", rep);
                }
            }
        }
    }
}

fn finite_horizon(ctx: &mut Ctx, sol: &Solution, d: &DpInputs, v: f64, refinement: &[usize]) {
    let model = &sol.model;
    let horizons: Vec<usize> = if refinement.is_empty() {
        (1..=8).collect()
    } else {
        refinement.to_vec()
    };
    let beta = model.beta();
    let tail = model.cost_sup() / (1.0 - beta);
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for &t in &horizons {
        let Some(vt) = ctx.attempt("finite_horizon", finite_horizon_oracle(model, t, &d.x, d.w)) else {
            return;
        };
        let bound = beta.powi(t as i32) * tail + ctx.tol.value;
        worst = worst.max((vt - v).abs() - bound);
        rows.push(vec![t.to_string(), fmt(vt), fmt(v), fmt(bound)]);
    }
    ctx.table("horizon", &["t", "v_t", "v", "bound"], rows);
    ctx.push("finite_horizon", worst <= 0.0, worst.max(0.0), json!({ "horizons": horizons }));
}

fn euler(ctx: &mut Ctx, e: &EulerInputs) {
    let model = &e.model.model;
    let Some(sol) = ctx.attempt("euler_inclusion", solve(model, e.vi_tol)) else {
        return;
    };
    let radius = e.cone_radius.unwrap_or_else(|| default_radius(model));
    let i = model.state_index(&e.x).expect("validated grid state");
    let y_bar = sol.policy_point(e.w, i).to_vec();
    if let Some(r) = ctx.attempt("euler_inclusion", euler_inclusion_residual(&sol, &e.x, e.w, radius)) {
        let tol = ctx.tol.euler;
        ctx.push("euler_inclusion", r <= tol, r, json!({ "y_bar": y_bar, "cone_radius": radius }));
    }
    if let Some(p) = &e.perturb {
        let y = linalg::add(&y_bar, p);
        if let Some(r) = ctx.attempt("euler_perturbed", euler_residual_at(&sol, &e.x, &y, e.w, radius)) {
            let min = e.min_perturbed_residual;
            ctx.push("euler_perturbed", r >= min, r, json!({ "y": y, "min_residual": min }));
        }
    }
    if e.limiting {
        let dirs = check_directions(model.dim());
        if let Some(rep) = ctx.attempt("limiting_euler", limiting_euler_check(&sol, &e.x, e.w, &dirs, radius)) {
            let get = |k: &str| rep.extras.get(k).and_then(Value::as_f64);
            let (raw, conv) = (get("raw_residual"), get("convexified_residual"));
            let candidates = rep.extras.get("x_star_candidates").cloned();
            ctx.report("limiting_euler", rep);
            if let (Some(raw), Some(conv)) = (raw, conv) {
                let tol = ctx.tol.exact;
                ctx.push(
                    "raw_dominates_convexified",
                    raw + tol >= conv,
                    (conv - raw).max(0.0),
                    json!({ "raw_residual": raw, "convexified_residual": conv }),
                );
            }
            if let Some(c) = candidates {
                ctx.telemetry("x_star_candidates", c);
            }
        }
    }
}

/// Symmetric max-min distance between two finite point lists.
fn point_list_distance(a: &[Point], b: &[Point]) -> f64 {
    let one_way = |p: &[Point], q: &[Point]| {
        p.iter()
            .map(|u| q.iter().map(|v| linalg::dist(u, v)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    if a.is_empty() != b.is_empty() {
        return f64::INFINITY;
    }
    one_way(a, b).max(one_way(b, a))
}

fn nlp(ctx: &mut Ctx, n: &NlpInputs) {
    let model = &n.model.model;
    let Some(sol) = ctx.attempt("mfcq", solve(model, n.vi_tol)) else {
        return;
    };
    let i = model.state_index(&n.x).expect("validated grid state");
    let y = sol.policy_point(n.w, i).to_vec();
    let Some(mf) = ctx.attempt("mfcq", mfcq_check(model, &n.x, &y)) else {
        return;
    };
    let holds = mf.holds;
    ctx.push(
        "mfcq",
        holds == n.expect_mfcq,
        0.0,
        json!({ "expected": n.expect_mfcq, "certificate": to_value(&mf), "y_bar": y }),
    );
    if !holds {
        return;
    }
    if let Some(set) = ctx.attempt("multiplier_set", lagrange_multiplier_set(&sol, &n.x, &y, n.w)) {
        let lambdas: Vec<Point> = set.multipliers.iter().map(|m| m.lambda.clone()).collect();
        let details = json!({ "multipliers": lambdas, "active_ineq": set.active_ineq });
        match &n.expect_multipliers {
            Some(e) => {
                let r = point_list_distance(&lambdas, e);
                let tol = ctx.tol.value;
                ctx.push("multiplier_set", r <= tol, r, details);
            }
            None => ctx.telemetry("multiplier_set", details),
        }
    }
    let dirs = check_directions(model.dim());
    if let Some(rep) = ctx.attempt("nlp_value_subdiff", nlp_value_subdiff_check(&sol, &n.x, n.w, &dirs)) {
        ctx.report("nlp_value_subdiff", rep);
    }
}
