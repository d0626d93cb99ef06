//! Acceptance suite: one pass/fail line per criterion.

use std::process::{Command, ExitCode};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use subdiff::convexgeom::{default_directions, hausdorff_distance, SetRep};
use subdiff::dp::{
    bellman_operator, desk, envelope_check, euler_inclusion_residual, euler_residual_at, finite_horizon_oracle,
    lagrange_multiplier_set, limiting_euler_check, mfcq_check, nlp_value_subdiff_check, solve,
    strict_value_derivative_check, value_function_subdiff, value_iteration, DPModel, SubdiffKind,
};
use subdiff::linalg::{self, Point};
use subdiff::measure::{uniform_discretization, MeasureSpace};
use subdiff::nonsmooth::{self, oracle, FnExpr};
use subdiff::setintegral::{
    check_directions, check_lyapunov_convexification, check_supremum_representation, clarke_leibniz_check,
    integral_functional, strict_leibniz, Integrand, SetValuedMap,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn e2s<T>(r: subdiff::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn criterion_1() -> Outcome {
    let f = FnExpr::neg(FnExpr::abs_shifted(0.0));
    let lim = e2s(nonsmooth::limiting_subdiff(&f, &[0.0], true))?;
    let cla = e2s(nonsmooth::clarke_gradient(&f, &[0.0], true))?;
    let dirs = check_directions(1);
    let two_points = SetRep::points(vec![vec![-1.0], vec![1.0]]).unwrap();
    let segment = SetRep::polytope(vec![vec![-1.0], vec![1.0]]).unwrap();
    let d_lim = e2s(hausdorff_distance(&lim.set, &two_points, &dirs))?;
    let d_cla = e2s(hausdorff_distance(&cla.set, &segment, &dirs))?;
    ensure(lim.set.vertex_count() == 2 && !lim.set.is_convex(), format!("limiting set {:?}", lim.set))?;
    ensure(d_lim <= 1e-12, format!("limiting set off by {d_lim:e}"))?;
    ensure(d_cla <= 1e-12, format!("Clarke set off by {d_cla:e}"))?;
    let hull = lim.set.convexify();
    let mut worst = 0.0f64;
    for h in &dirs {
        worst = worst.max((e2s(cla.set.support(h))? - e2s(hull.support(h))?).abs());
    }
    ensure(worst <= 1e-12, format!("Clarke vs convexified limiting support gap {worst:e}"))?;
    Ok(format!("limiting = {{-1, 1}}, Clarke = [-1, 1], support gap {worst:e}"))
}

fn random_set(rng: &mut ChaCha8Rng, dim: usize) -> SetRep {
    let count = rng.gen_range(1..=4);
    let pts: Vec<Point> = (0..count).map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    if rng.gen_bool(0.5) {
        SetRep::points(pts).unwrap()
    } else {
        SetRep::polytope(pts).unwrap()
    }
}

fn random_measure(rng: &mut ChaCha8Rng, n: usize) -> MeasureSpace {
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    MeasureSpace::new((0..n).map(|i| vec![i as f64]).collect(), weights).unwrap()
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for draw in 0..200 {
        let dim = rng.gen_range(1..=2);
        let n = rng.gen_range(1..=3);
        let sets = (0..n).map(|_| random_set(&mut rng, dim)).collect();
        let m = random_measure(&mut rng, n);
        let gamma = SetValuedMap::new(sets).unwrap();
        let dirs = default_directions(dim, 64, draw);
        let rep = e2s(check_supremum_representation(&gamma, &m, &dirs))?;
        worst = worst.max(rep.max_residual);
        ensure(rep.pass && rep.max_residual <= 1e-9, format!("draw {draw}: residual {:e}", rep.max_residual))?;
    }
    Ok(format!("200 maps, max support residual {worst:e}"))
}

fn criterion_3() -> Outcome {
    let ns = [1, 2, 4, 8, 16, 32, 64];
    let set = SetRep::points(vec![vec![0.0], vec![1.0]]).unwrap();
    let family = |n: usize| Ok((SetValuedMap::new(vec![set.clone(); n])?, uniform_discretization(n, 0.0, 1.0)?));
    let rep = e2s(check_lyapunov_convexification(family, &ns, &check_directions(1)))?;
    ensure(rep.pass, format!("refinement check failed: {:?}", rep.warnings))?;
    let mut worst = 0.0f64;
    for (&n, &gap) in ns.iter().zip(&rep.per_direction) {
        worst = worst.max((gap - 0.5 / n as f64).abs());
    }
    ensure(rep.per_direction.len() == ns.len() && worst <= 1e-12, format!("gap deviates by {worst:e}"))?;
    Ok(format!("gap = 1/(2N) for N = 1..64, max deviation {worst:e}"))
}

/// A random DSL atom in `dim` variables whose kinks pass near the origin.
fn random_atom(rng: &mut ChaCha8Rng, dim: usize, depth: usize) -> FnExpr {
    let affine = |rng: &mut ChaCha8Rng| {
        let a: Point = (0..dim).map(|_| rng.gen_range(-3i32..=3) as f64).collect();
        let b = [0.0, 0.0, 0.5, -0.5][rng.gen_range(0..4)];
        FnExpr::affine(a, b)
    };
    if depth == 0 {
        return affine(rng);
    }
    match rng.gen_range(0..6) {
        0 => affine(rng),
        1 => FnExpr::max((0..rng.gen_range(2..=3)).map(|_| random_atom(rng, dim, depth - 1)).collect()).unwrap(),
        2 => FnExpr::min((0..rng.gen_range(2..=3)).map(|_| random_atom(rng, dim, depth - 1)).collect()).unwrap(),
        3 => FnExpr::neg(random_atom(rng, dim, depth - 1)),
        4 => FnExpr::sum(vec![random_atom(rng, dim, depth - 1), random_atom(rng, dim, depth - 1)]).unwrap(),
        _ => {
            let diag: Vec<Vec<f64>> = (0..dim)
                .map(|i| (0..dim).map(|j| if i == j { rng.gen_range(-1.0..2.0) } else { 0.0 }).collect())
                .collect();
            let q = FnExpr::quadratic(diag, vec![0.0; dim], 0.0).unwrap();
            FnExpr::sum(vec![q, random_atom(rng, dim, depth - 1)]).unwrap()
        }
    }
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut regular, mut equality_tested, mut skipped_equality) = (0, 0, 0);
    let mut worst = 0.0f64;
    for draw in 0..100 {
        let dim = rng.gen_range(1..=2);
        let n = rng.gen_range(1..=5);
        let atoms: Vec<FnExpr> = (0..n).map(|_| random_atom(&mut rng, dim, 2)).collect();
        let phi = Integrand::new(atoms).unwrap();
        let m = random_measure(&mut rng, n);
        let x = vec![0.0; dim];
        let rep = e2s(clarke_leibniz_check(&phi, &m, &x, &check_directions(dim)))?;
        worst = worst.max(rep.max_residual);
        ensure(
            rep.pass && rep.max_residual <= 1e-8,
            format!("draw {draw}: residual {:e}, warnings {:?}", rep.max_residual, rep.warnings),
        )?;
        let all_regular = rep.extras["all_regular"].as_bool().unwrap_or(false);
        let tested = rep.extras["equality_tested"].as_bool().unwrap_or(false);
        regular += all_regular as usize;
        equality_tested += tested as usize;
        skipped_equality += (all_regular && !tested) as usize;
    }
    ensure(skipped_equality == 0, format!("{skipped_equality} regular draws could not test equality"))?;

    // strict inclusion: |x| and -|x| cancel in the integral but not atom-wise
    let w = 0.5;
    let phi = Integrand::new(vec![FnExpr::abs_shifted(0.0), FnExpr::neg(FnExpr::abs_shifted(0.0))]).unwrap();
    let m = MeasureSpace::discrete(&[0.0, 1.0], &[w, w]).unwrap();
    let rep = e2s(clarke_leibniz_check(&phi, &m, &[0.0], &check_directions(1)))?;
    let gap = rep.extras["max_gap"].as_f64().unwrap_or(0.0);
    ensure(rep.pass && gap >= 0.1 * w, format!("witness gap {gap} below {}", 0.1 * w))?;

    // the single-sign family -|x - t| with an atom at 0 attains equality
    let phi = Integrand::new(vec![FnExpr::neg(FnExpr::abs_shifted(0.0)), FnExpr::neg(FnExpr::abs_shifted(0.5))]).unwrap();
    let m = MeasureSpace::discrete(&[0.0, 0.5], &[w, w]).unwrap();
    let single = e2s(clarke_leibniz_check(&phi, &m, &[0.0], &check_directions(1)))?;
    let single_gap = single.extras["max_gap"].as_f64().unwrap_or(f64::NAN);
    Ok(format!(
        "100 integrands, max residual {worst:e}; {regular} all-regular, {equality_tested} equality-tested; \
         paired witness gap {gap} >= {}; single-sign -|x - t| gap {single_gap}",
        0.1 * w
    ))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_strict, mut worst_fd) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let dim = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=5);
        let atoms: Vec<FnExpr> = (0..n)
            .map(|_| {
                let q: Vec<Vec<f64>> = (0..dim).map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
                let sym: Vec<Vec<f64>> =
                    (0..dim).map(|i| (0..dim).map(|j| 0.5 * (q[i][j] + q[j][i])).collect()).collect();
                let a: Point = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
                FnExpr::quadratic(sym, a, rng.gen_range(-1.0..1.0)).unwrap()
            })
            .collect();
        let phi = Integrand::new(atoms).unwrap();
        let m = random_measure(&mut rng, n);
        let x: Point = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sum = e2s(strict_leibniz(&phi, &m, &x))?;
        let i_phi = e2s(integral_functional(&phi, &m))?;
        let strict = e2s(nonsmooth::strict_derivative(&i_phi, &x))?.ok_or("no strict derivative")?;
        let fd = oracle::central_gradient(|z| i_phi.eval(z), &x, 1e-5);
        worst_strict = worst_strict.max(linalg::norm_inf(&linalg::sub(&sum, &strict)));
        worst_fd = worst_fd.max(linalg::norm_inf(&linalg::sub(&sum, &fd)));
    }
    ensure(worst_strict <= 1e-10, format!("strict derivative mismatch {worst_strict:e}"))?;
    ensure(worst_fd <= 1e-4, format!("finite-difference mismatch {worst_fd:e}"))?;
    Ok(format!("50 smooth integrands, strict gap {worst_strict:e}, finite-difference gap {worst_fd:e}"))
}

fn sup_dist(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let models: Vec<(&str, DPModel)> = vec![
        ("unit-cost", desk::unit_cost()),
        ("quadratic-envelope", desk::quadratic_envelope(0.3)),
        ("euler-single", desk::euler_single()),
        ("euler-two-shock", desk::euler_two_shock()),
        ("euler-plane", desk::euler_plane()),
    ];
    for pair in 0..100 {
        let m = &models[pair % models.len()].1;
        let mut table = || -> Vec<Vec<f64>> {
            (0..m.shocks()).map(|_| (0..m.states().len()).map(|_| rng.gen_range(-5.0..5.0)).collect()).collect()
        };
        let (p, bump) = (table(), table());
        let q: Vec<Vec<f64>> =
            p.iter().zip(&bump).map(|(r, s)| r.iter().zip(s).map(|(a, b)| a + b.abs()).collect()).collect();
        let (tp, tq) = (e2s(bellman_operator(m, &p))?, e2s(bellman_operator(m, &q))?);
        ensure(
            sup_dist(&tp, &tq) <= m.beta() * sup_dist(&p, &q) + 1e-12,
            format!("pair {pair}: contraction fails"),
        )?;
        let monotone = tp.iter().flatten().zip(tq.iter().flatten()).all(|(a, b)| *a <= b + 1e-12);
        ensure(monotone, format!("pair {pair}: monotonicity fails"))?;
    }
    let v = e2s(value_iteration(&desk::unit_cost(), 1e-8))?;
    let off = v.v.iter().flatten().map(|x| (x - 2.0).abs()).fold(0.0, f64::max);
    ensure(off <= 1e-8, format!("unit-cost value off by {off:e}"))?;

    let tol = 1e-10;
    let mut worst_ratio = 0.0f64;
    for (name, m) in &models {
        let sol = e2s(solve(m, tol))?;
        let bound_base = m.cost_sup() / (1.0 - m.beta());
        for (i, x) in m.states().iter().enumerate() {
            for w in 0..m.shocks() {
                let v = sol.values.v[w][i];
                for t in 1..=8 {
                    let vt = e2s(finite_horizon_oracle(m, t, x, w))?;
                    let bound = m.beta().powi(t as i32) * bound_base;
                    let gap = (vt - v).abs();
                    ensure(gap <= bound + tol, format!("{name}: T={t} gap {gap:e} > {bound:e}"))?;
                    if bound > 0.0 {
                        worst_ratio = worst_ratio.max(gap / bound);
                    }
                }
            }
        }
    }
    Ok(format!(
        "100 table pairs; unit-cost |v - 2| = {off:e}; 5 models T = 1..8, worst gap/bound {worst_ratio:.3}"
    ))
}

fn criterion_7() -> Outcome {
    let a = 0.3;
    let x = 0.5;
    let sol = e2s(solve(&desk::quadratic_envelope(a), 1e-10))?;
    let dv = e2s(value_function_subdiff(&sol, 0, &[x], SubdiffKind::Clarke))?;
    let expect = SetRep::singleton(vec![2.0 * (x - a)]);
    let d = e2s(hausdorff_distance(&dv.set, &expect, &check_directions(1)))?;
    ensure(d <= 1e-8, format!("dv off by {d:e}"))?;
    let env = e2s(envelope_check(&sol, &[x], 0, &check_directions(1)))?;
    ensure(env.pass && env.max_residual <= 1e-8, format!("envelope residual {:e}", env.max_residual))?;
    let strict = e2s(strict_value_derivative_check(&sol, &[x], 0))?;
    ensure(strict.pass, format!("strict derivative check: {:?}", strict.warnings))?;
    let fd = oracle::central_gradient(|z| sol.values.closed_form[0].eval(z), &[x], 1e-6)[0];
    ensure((fd - 2.0 * (x - a)).abs() <= 1e-4, format!("finite difference {fd}"))?;

    let floor = e2s(solve(&desk::state_floor_box(), 1e-10))?;
    let neg = e2s(envelope_check(&floor, &[0.0], 0, &check_directions(1)))?;
    let lower = neg.hypotheses.get("lower_viable").copied();
    ensure(!neg.pass && lower == Some(false), format!("negative control pass={} lower={lower:?}", neg.pass))?;
    Ok(format!(
        "dv(0.5) = {{0.4}} (gap {d:e}), finite difference {fd:.6}; state-floor control FAIL with lower_viable = false"
    ))
}

fn criterion_8() -> Outcome {
    let cases: Vec<(&str, DPModel, Point, Vec<usize>)> = vec![
        ("euler-single", desk::euler_single(), vec![0.0], vec![0]),
        ("euler-two-shock", desk::euler_two_shock(), vec![0.0], vec![0, 1]),
        ("euler-plane", desk::euler_plane(), vec![0.0, 0.0], vec![0]),
    ];
    let (mut worst, mut least_perturbed) = (0.0f64, f64::INFINITY);
    for (name, m, x, shocks) in &cases {
        let sol = e2s(solve(m, 1e-10))?;
        let radius = subdiff::dp::default_radius(m);
        let i = m.state_index(x).unwrap();
        for &w in shocks {
            let r = e2s(euler_inclusion_residual(&sol, x, w, radius))?;
            worst = worst.max(r);
            ensure(r <= 1e-6, format!("{name} shock {w}: residual {r:e}"))?;
            let y = sol.policy_point(w, i);
            let perturbed: Point = y.iter().map(|v| if *v <= 0.5 { v + 0.25 } else { v - 0.25 }).collect();
            let rp = e2s(euler_residual_at(&sol, x, &perturbed, w, radius))?;
            least_perturbed = least_perturbed.min(rp);
            ensure(rp >= 0.1, format!("{name} shock {w}: perturbed residual {rp:e}"))?;
        }
    }
    let kink = e2s(solve(&desk::euler_concave_kink(), 1e-10))?;
    let radius = subdiff::dp::default_radius(&kink.model);
    let rep = e2s(limiting_euler_check(&kink, &[0.0], 1, &check_directions(1), radius))?;
    let raw = rep.extras["raw_residual"].as_f64().unwrap_or(f64::NAN);
    let conv = rep.extras["convexified_residual"].as_f64().unwrap_or(f64::NAN);
    ensure(raw >= conv, format!("raw {raw} < convexified {conv}"))?;
    Ok(format!(
        "optimal residual <= {worst:e} on 3 models; perturbed >= {least_perturbed:.3}; kink model raw {raw} >= convexified {conv}"
    ))
}

fn criterion_9() -> Outcome {
    let sol = e2s(solve(&desk::state_floor_nlp(), 1e-10))?;
    let x = [0.0];
    let i = sol.model.state_index(&x).unwrap();
    let y = sol.policy_point(0, i).to_vec();
    let mf = e2s(mfcq_check(&sol.model, &x, &y))?;
    ensure(mf.holds && !mf.xi.is_empty(), format!("MFCQ {mf:?}"))?;
    let set = e2s(lagrange_multiplier_set(&sol, &x, &y, 0))?;
    ensure(set.multipliers.len() == 1, format!("{} multipliers", set.multipliers.len()))?;
    let lam = &set.multipliers[0].lambda;
    ensure(lam.len() == 1 && (lam[0] - 1.0).abs() <= 1e-8, format!("lambda {lam:?}"))?;
    let rep = e2s(nlp_value_subdiff_check(&sol, &x, 0, &check_directions(1)))?;
    ensure(rep.pass && rep.max_residual <= 1e-6, format!("value subdifferential residual {:e}", rep.max_residual))?;
    let fd = rep.extras["finite_difference"][0].as_f64().unwrap_or(f64::NAN);
    ensure((fd - 1.0).abs() <= 1e-4, format!("finite difference {fd}"))?;

    let bad = e2s(solve(&desk::duplicated_equality_nlp(), 1e-10))?;
    let yb = bad.policy_point(0, i).to_vec();
    let neg = e2s(mfcq_check(&bad.model, &x, &yb))?;
    ensure(!neg.holds, "rank-deficient control reported MFCQ".into())?;
    Ok(format!("Lambda = {{{}}}, dv = {{1}} (fd {fd:.6}), xi = {:?}; duplicated equality MFCQ = false", lam[0], mf.xi))
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    for (k, jobs) in ["1", "1", "4"].iter().enumerate() {
        let out = dir.path().join(format!("run{k}"));
        let status = Command::new(env!("CARGO_BIN_EXE_subdiff"))
            .args(["run", "--builtins", "--seed", "42", "--jobs", jobs, "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.code() == Some(0), format!("run {k} exited {:?}", status.status.code()))?;
        reports.push(std::fs::read(out.join("report.json")).map_err(|e| e.to_string())?);
    }
    ensure(reports.windows(2).all(|w| w[0] == w[1]), "reports differ between runs".into())?;
    Ok(format!("3 runs of the builtin suite, {} identical bytes each", reports[0].len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("subdifferentials of -|x| at 0", criterion_1),
        ("supremum representation on 200 random maps", criterion_2),
        ("Lyapunov gap 1/(2N)", criterion_3),
        ("Clarke Leibniz rule on 100 random integrands", criterion_4),
        ("strict Leibniz rule on smooth integrands", criterion_5),
        ("Bellman contraction, fixed point, finite horizon", criterion_6),
        ("envelope theorem and viability control", criterion_7),
        ("stochastic Euler inclusion", criterion_8),
        ("NLP multiplier formula and MFCQ", criterion_9),
        ("deterministic CLI reports", criterion_10),
    ];
    let mut failed = 0;
    for (k, (title, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(msg) => println!("criterion {:>2} PASS  {title}: {msg}", k + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {title}: {msg}", k + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
