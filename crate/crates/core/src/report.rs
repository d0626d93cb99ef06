//! Machine-readable outcome of a verification check.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Absolute and relative tolerance for support-function comparisons.
pub const SUPPORT_TOL: f64 = 1e-9;

pub fn within(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs().max(a.abs()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub check: String,
    pub pass: bool,
    pub max_residual: f64,
    pub per_direction: Vec<f64>,
    pub warnings: Vec<String>,
    /// Which theorem hypotheses were verified at the data.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub hypotheses: BTreeMap<String, bool>,
    /// Check-specific diagnostics, ordered by key for stable output.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, Value>,
}

impl Report {
    pub fn new(check: &str) -> Report {
        Report {
            check: check.to_string(),
            pass: true,
            max_residual: 0.0,
            per_direction: Vec::new(),
            warnings: Vec::new(),
            hypotheses: BTreeMap::new(),
            extras: BTreeMap::new(),
        }
    }

    /// Record a residual; it counts against the check when above `tol`.
    pub fn residual(&mut self, r: f64, tol: f64) {
        self.per_direction.push(r);
        self.max_residual = self.max_residual.max(r);
        if !(r <= tol) {
            self.pass = false;
        }
    }

    pub fn fail(&mut self, why: impl Into<String>) {
        self.pass = false;
        self.warnings.push(why.into());
    }

    pub fn warn(&mut self, why: impl Into<String>) {
        self.warnings.push(why.into());
    }

    pub fn hypothesis(&mut self, name: &str, holds: bool) {
        self.hypotheses.insert(name.to_string(), holds);
    }

    /// A failure with some hypothesis false is expected, not a counterexample.
    pub fn hypothesis_violation(&self) -> bool {
        !self.pass && self.hypotheses.values().any(|h| !h)
    }

    pub fn verdict(&self) -> &'static str {
        if self.pass {
            "pass"
        } else if self.hypothesis_violation() {
            "hypothesis violation (expected)"
        } else {
            "theorem violation"
        }
    }

    pub fn extra(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.extras.insert(key.to_string(), v);
    }
}
