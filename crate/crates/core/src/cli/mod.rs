//! Scenario runner behind the `subdiff` binary.
//!
//! A scenario file lists experiments; each one is validated up front, run on
//! a bounded thread pool, and reported in name order so that the output does
//! not depend on scheduling.

pub mod builtins;
mod exec;
mod scenario;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use scenario::{
    DpCheck, DpInputs, EulerInputs, Family, GeometryInputs, IntegralInputs, Job, Kind, LeibnizInputs,
    LyapunovInputs, ModelRef, NlpInputs, Payload, Scenario, ScenarioFile, Shape, Tolerances,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    fn io(path: &Path, source: std::io::Error) -> CliError {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Failed with some theorem hypothesis false at the data.
    HypothesisViolation,
    /// The check could not be carried out.
    Error,
    /// Informational only; never fails a run.
    Telemetry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub paper_ref: String,
    pub pass: bool,
    pub residual: Option<f64>,
    pub hypotheses: BTreeMap<String, bool>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub details: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub kind: Kind,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub checks: Vec<CheckEntry>,
}

impl ScenarioReport {
    pub fn check(&self, name: &str) -> Option<&CheckEntry> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// A CSV table for refinement plots.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub jobs: usize,
    pub seed: Option<u64>,
    pub tol_scale: f64,
    pub strict: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            jobs: 1,
            seed: None,
            tol_scale: 1.0,
            strict: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub reports: Vec<ScenarioReport>,
    pub tables: Vec<Table>,
    pub capacity_exceeded: bool,
    pub exit_code: i32,
}

impl RunOutcome {
    pub fn report(&self, scenario: &str) -> Option<&ScenarioReport> {
        self.reports.iter().find(|r| r.scenario == scenario)
    }

    /// The `report.json` body.
    pub fn report_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.reports).expect("reports serialize");
        s.push('\n');
        s
    }
}

/// Whether a failing entry counts against the run.
fn counts_against(c: &CheckEntry, strict: bool) -> bool {
    match c.status {
        Status::Fail | Status::Error => true,
        Status::HypothesisViolation => strict,
        Status::Pass | Status::Telemetry => false,
    }
}

/// Run validated jobs on up to `opts.jobs` threads.
pub fn run_jobs(jobs: &[Job], opts: &RunOptions) -> Result<RunOutcome, CliError> {
    if !(opts.tol_scale > 0.0 && opts.tol_scale.is_finite()) {
        return Err(CliError::Parse("--tol-scale must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| CliError::Parse(format!("thread pool: {e}")))?;
    let mut outputs: Vec<exec::Output> =
        pool.install(|| jobs.par_iter().map(|j| exec::execute(j, opts.tol_scale)).collect());
    outputs.sort_by(|a, b| a.report.scenario.cmp(&b.report.scenario));

    let mut capacity = false;
    let mut failed = false;
    let mut reports = Vec::with_capacity(outputs.len());
    let mut tables = Vec::new();
    let strict_by_name: BTreeMap<&str, bool> = jobs
        .iter()
        .map(|j| (j.scenario.name.as_str(), opts.strict || j.scenario.strict))
        .collect();
    for mut out in outputs {
        let strict = strict_by_name.get(out.report.scenario.as_str()).copied().unwrap_or(opts.strict);
        capacity |= out.capacity;
        out.report.pass = !out.report.checks.iter().any(|c| counts_against(c, strict));
        failed |= !out.report.pass;
        reports.push(out.report);
        tables.extend(out.tables);
    }
    let exit_code = if capacity {
        EXIT_CAPACITY
    } else if failed {
        EXIT_CHECK_FAILED
    } else {
        EXIT_OK
    };
    Ok(RunOutcome {
        reports,
        tables,
        capacity_exceeded: capacity,
        exit_code,
    })
}

pub fn load(path: &Path) -> Result<ScenarioFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    ScenarioFile::parse(&text)
}

/// Write `report.json`, `metadata.json` and `tables/*.csv` under `out`.
pub fn write_outputs(out: &Path, outcome: &RunOutcome, opts: &RunOptions) -> Result<(), CliError> {
    let tables_dir = out.join("tables");
    fs::create_dir_all(&tables_dir).map_err(|e| CliError::io(&tables_dir, e))?;
    let report = out.join("report.json");
    fs::write(&report, outcome.report_json()).map_err(|e| CliError::io(&report, e))?;

    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = serde_json::json!({
        "generated_unix": stamp,
        "version": env!("CARGO_PKG_VERSION"),
        "jobs": opts.jobs,
        "seed_override": opts.seed,
        "tol_scale": opts.tol_scale,
        "strict": opts.strict,
        "exit_code": outcome.exit_code,
    });
    let meta_path = out.join("metadata.json");
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n";
    fs::write(&meta_path, text).map_err(|e| CliError::io(&meta_path, e))?;

    for t in &outcome.tables {
        let path = tables_dir.join(format!("{}.csv", t.file));
        let to_err = |e: csv::Error| CliError::io(&path, e.into());
        let mut w = csv::Writer::from_path(&path).map_err(to_err)?;
        w.write_record(&t.header).map_err(to_err)?;
        for row in &t.rows {
            w.write_record(row).map_err(to_err)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

/// Parse, run and write; returns the process exit status.
pub fn run_file(file: &ScenarioFile, out: &Path, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let jobs = file.jobs(opts.seed)?;
    let outcome = run_jobs(&jobs, opts)?;
    write_outputs(out, &outcome, opts)?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(text: &str) -> ScenarioFile {
        ScenarioFile::parse(text).unwrap()
    }

    #[test]
    fn empty_file_runs_clean() {
        let out = run_jobs(&file(r#"{"scenarios": []}"#).jobs(None).unwrap(), &RunOptions::default()).unwrap();
        assert_eq!(out.exit_code, EXIT_OK);
        assert_eq!(out.report_json(), "[]\n");
    }

    #[test]
    fn catalogue_has_required_entries() {
        let all = builtins::all();
        assert!(all.len() >= 12);
        let text = builtins::list_builtins();
        for name in ["neg-abs", "lyapunov-01", "clarke-leibniz-regular", "euler-quadratic"] {
            assert!(text.contains(name), "{name}");
        }
        assert!(text.contains("equality case"));
    }

    #[test]
    fn oracle_requires_seed() {
        let mut s = builtins::find("neg-abs").unwrap();
        s.seed = None;
        assert!(s.validate(None).is_err());
        assert_eq!(s.validate(Some(3)).unwrap().scenario.seed, Some(3));
    }

    #[test]
    fn rejects_bad_files() {
        let dup = r#"{"scenarios": [{"builtin": "neg-abs"}, {"builtin": "neg-abs"}]}"#;
        assert!(matches!(file(dup).jobs(None), Err(CliError::Parse(_))));
        let unknown = r#"{"scenarios": [{"builtin": "nope"}]}"#;
        assert!(file(unknown).jobs(None).is_err());
        let neg_tol = r#"{"scenarios": [{"name": "g", "kind": "geometry", "tolerances": {"exact": -1},
            "inputs": {"a": {"dim": 1, "pieces": [[[0.0]]]}, "b": {"dim": 1, "pieces": [[[1.0]]]}}}]}"#;
        assert!(file(neg_tol).jobs(None).is_err());
        let off_grid = r#"{"scenarios": [{"name": "d", "kind": "dp", "inputs": {"model": {"desk": "unit-cost"}, "x": [0.5]}}]}"#;
        assert!(file(off_grid).jobs(None).is_err());
        assert!(ScenarioFile::parse("{").is_err());
    }

    #[test]
    fn file_seed_fills_in_but_flag_overrides() {
        let text = r#"{"seed": 11, "scenarios": [{"name": "o", "kind": "leibniz",
            "inputs": {"integrand": {"atoms": [{"op": "affine", "a": [1.0], "b": 0.0}]},
                       "measure": {"atoms": [0.0], "weights": [1.0]}, "x": [0.0], "oracle": true}}]}"#;
        assert_eq!(file(text).jobs(None).unwrap()[0].scenario.seed, Some(11));
        assert_eq!(file(text).jobs(Some(5)).unwrap()[0].scenario.seed, Some(5));
    }

    #[test]
    fn hypothesis_violation_fails_only_when_strict() {
        let f = file(r#"{"scenarios": [{"builtin": "envelope-viability-violation"}]}"#);
        let jobs = f.jobs(None).unwrap();
        let lax = run_jobs(&jobs, &RunOptions::default()).unwrap();
        assert_eq!(lax.exit_code, EXIT_OK);
        let c = lax.reports[0].check("envelope").unwrap();
        assert_eq!(c.status, Status::HypothesisViolation);
        assert_eq!(c.hypotheses.get("lower_viable"), Some(&false));
        let strict = RunOptions {
            strict: true,
            ..RunOptions::default()
        };
        assert_eq!(run_jobs(&jobs, &strict).unwrap().exit_code, EXIT_CHECK_FAILED);
    }

    #[test]
    fn scenario_round_trips_through_json() {
        for s in builtins::all() {
            let text = serde_json::to_string(&s).unwrap();
            let back: Scenario = serde_json::from_str(&text).unwrap();
            assert_eq!(back, s);
            back.validate(None).unwrap();
        }
    }
}
