use std::fs;
use std::path::Path;
use std::process::Command;

fn subdiff(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_subdiff")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn list_shows_catalogue() {
    let (code, text) = subdiff(&["list"]);
    assert_eq!(code, 0);
    assert!(text.lines().count() >= 12);
    assert!(text.contains("clarke-leibniz-regular") && text.contains("euler-quadratic"));
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let empty = write(dir.path(), "empty.json", r#"{"scenarios": []}"#);
    assert_eq!(subdiff(&["run", &empty, "--out", out]).0, 0);
    assert_eq!(fs::read_to_string(dir.path().join("out/report.json")).unwrap(), "[]\n");

    let broken = write(dir.path(), "broken.json", "{ not json");
    assert_eq!(subdiff(&["run", &broken, "--out", out]).0, 2);
    assert_eq!(subdiff(&["validate", &broken]).0, 2);

    // a geometry scenario with a wrong expected distance
    let failing = write(
        dir.path(),
        "failing.json",
        r#"{"scenarios": [{"name": "g", "kind": "geometry", "inputs": {
            "a": {"dim": 1, "pieces": [[[0.0]], [[1.0]]]},
            "b": {"dim": 1, "pieces": [[[0.0], [1.0]]]},
            "expect_hausdorff": 0.25}}]}"#,
    );
    assert_eq!(subdiff(&["validate", &failing]).0, 0);
    assert_eq!(subdiff(&["run", &failing, "--out", out]).0, 1);
    // loosening every tolerance does not rescue a wrong expectation this far off
    assert_eq!(subdiff(&["run", &failing, "--out", out, "--tol-scale", "1e6"]).0, 1);

    // 21 two-point atoms in general position overflow the selector cap
    let sets: Vec<String> = (0..21)
        .map(|i| {
            let t = i as f64;
            format!(r#"{{"dim": 2, "pieces": [[[0.0, 0.0]], [[{}, {}]]]}}"#, (0.7 * t + 0.1).cos(), (1.3 * t + 0.2).sin())
        })
        .collect();
    let weights = vec!["0.05"; 21].join(", ");
    let atoms: Vec<String> = (0..21).map(|i| i.to_string()).collect();
    let big = write(
        dir.path(),
        "big.json",
        &format!(
            r#"{{"scenarios": [{{"name": "big", "kind": "integral", "inputs": {{
                "map": {{"sets": [{}]}}, "measure": {{"atoms": [{}], "weights": [{}]}}}}}}]}}"#,
            sets.join(", "),
            atoms.join(", "),
            weights
        ),
    );
    assert_eq!(subdiff(&["run", &big, "--out", out]).0, 3);

    let control = write(dir.path(), "control.json", r#"{"scenarios": [{"builtin": "envelope-viability-violation"}]}"#);
    assert_eq!(subdiff(&["run", &control, "--out", out]).0, 0);
    assert_eq!(subdiff(&["run", &control, "--out", out, "--strict"]).0, 1);
}

#[test]
fn lyapunov_table_has_half_over_n_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "l.json", r#"{"scenarios": [{"builtin": "lyapunov-01"}]}"#);
    let out = dir.path().join("out");
    assert_eq!(subdiff(&["run", &file, "--out", out.to_str().unwrap()]).0, 0);
    let mut rdr = csv::Reader::from_path(out.join("tables/lyapunov-01.csv")).unwrap();
    let mut seen = 0;
    for row in rdr.records() {
        let row = row.unwrap();
        let n: f64 = row[0].parse().unwrap();
        let gap: f64 = row[1].parse().unwrap();
        assert!((gap - 0.5 / n).abs() <= 1e-12);
        seen += 1;
    }
    assert_eq!(seen, 7);
}

#[test]
fn reports_are_byte_identical_across_runs_and_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let (ca, _) = subdiff(&["run", "--builtins", "--seed", "42", "--jobs", "1", "--out", a.to_str().unwrap()]);
    let (cb, _) = subdiff(&["run", "--builtins", "--seed", "42", "--jobs", "4", "--out", b.to_str().unwrap()]);
    assert_eq!((ca, cb), (0, 0));
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());
    for entry in fs::read_dir(a.join("tables")).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            fs::read(a.join("tables").join(&name)).unwrap(),
            fs::read(b.join("tables").join(&name)).unwrap()
        );
    }
}
