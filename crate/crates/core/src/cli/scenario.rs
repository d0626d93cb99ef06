//! Declarative experiment files.

use std::collections::BTreeSet;

use serde::de::{DeserializeOwned, Error as _};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::convexgeom::SetRep;
use crate::dp::{desk, DPModel};
use crate::linalg::Point;
use crate::measure::MeasureSpace;
use crate::setintegral::{Integrand, SetValuedMap};

use super::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Geometry,
    Integral,
    Leibniz,
    Lyapunov,
    Dp,
    Euler,
    Nlp,
}

/// Tolerances the runner applies on top of the library checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Set identities that hold exactly in floating point.
    pub exact: f64,
    pub support: f64,
    pub value: f64,
    /// Analytic derivatives against each other.
    pub strict: f64,
    /// Analytic derivatives against finite differences.
    pub fd: f64,
    pub euler: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            exact: 1e-12,
            support: 1e-9,
            value: 1e-8,
            strict: 1e-10,
            fd: 1e-4,
            euler: 1e-6,
        }
    }
}

impl Tolerances {
    pub fn scaled(&self, k: f64) -> Tolerances {
        Tolerances {
            exact: self.exact * k,
            support: self.support * k,
            value: self.value * k,
            strict: self.strict * k,
            fd: self.fd * k,
            euler: self.euler * k,
        }
    }

    fn validate(&self) -> Result<(), String> {
        let all = [self.exact, self.support, self.value, self.strict, self.fd, self.euler];
        if all.iter().all(|t| *t > 0.0 && t.is_finite()) {
            Ok(())
        } else {
            Err("tolerances must be positive and finite".into())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub inputs: Value,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refinement: Vec<usize>,
    /// Hypothesis violations fail the run.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub strict: bool,
}

/// A DP model given inline or by reference-model name.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelRef {
    pub desk: Option<String>,
    pub model: DPModel,
}

impl ModelRef {
    pub fn desk(name: &str) -> ModelRef {
        ModelRef {
            desk: Some(name.to_string()),
            model: desk::by_name(name).expect("known reference model"),
        }
    }
}

impl Serialize for ModelRef {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match &self.desk {
            Some(name) => serde_json::json!({ "desk": name }).serialize(s),
            None => self.model.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for ModelRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        if let Some(name) = v.get("desk") {
            let name = name.as_str().ok_or_else(|| D::Error::custom("desk must be a string"))?;
            let model = desk::by_name(name).ok_or_else(|| {
                D::Error::custom(format!("unknown reference model {name:?}; known: {}", desk::names().join(", ")))
            })?;
            return Ok(ModelRef {
                desk: Some(name.to_string()),
                model,
            });
        }
        let model = DPModel::deserialize(v).map_err(D::Error::custom)?;
        Ok(ModelRef { desk: None, model })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryInputs {
    pub a: SetRep,
    pub b: SetRep,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_hausdorff: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegralInputs {
    pub map: SetValuedMap,
    pub measure: MeasureSpace,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Abs,
    NegAbs,
    Square,
}

/// Atoms `shape(x - t)` over the uniform discretization of an interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Family {
    pub shape: Shape,
    pub interval: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeibnizInputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrand: Option<Integrand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureSpace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    pub x: Point,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_limiting: Option<SetRep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_clarke: Option<SetRep>,
    /// Lower bound on the Clarke Leibniz gap, for strict-inclusion witnesses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_gap: Option<f64>,
    /// Cross-check generalized directional derivatives by sampling.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub oracle: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovInputs {
    pub set: SetRep,
    #[serde(default = "unit_interval")]
    pub interval: [f64; 2],
    /// When given, the gap must equal `coeff / N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_gap_coeff: Option<f64>,
}

fn unit_interval() -> [f64; 2] {
    [0.0, 1.0]
}

fn vi_tol() -> f64 {
    1e-10
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DpCheck {
    FixedPoint,
    FiniteHorizon,
    Envelope,
    StrictDerivative,
}

fn dp_checks() -> Vec<DpCheck> {
    vec![DpCheck::FixedPoint, DpCheck::FiniteHorizon, DpCheck::Envelope]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpInputs {
    pub model: ModelRef,
    pub x: Point,
    #[serde(default)]
    pub w: usize,
    #[serde(default = "vi_tol")]
    pub vi_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_value: Option<f64>,
    #[serde(default = "dp_checks")]
    pub checks: Vec<DpCheck>,
}

fn point_one() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EulerInputs {
    pub model: ModelRef,
    pub x: Point,
    #[serde(default)]
    pub w: usize,
    #[serde(default = "vi_tol")]
    pub vi_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cone_radius: Option<f64>,
    /// Offset added to the optimal control for a negative control.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb: Option<Point>,
    #[serde(default = "point_one")]
    pub min_perturbed_residual: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub limiting: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NlpInputs {
    pub model: ModelRef,
    pub x: Point,
    #[serde(default)]
    pub w: usize,
    #[serde(default = "vi_tol")]
    pub vi_tol: f64,
    #[serde(default = "yes")]
    pub expect_mfcq: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_multipliers: Option<Vec<Point>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Geometry(GeometryInputs),
    Integral(IntegralInputs),
    Leibniz(LeibnizInputs),
    Lyapunov(LyapunovInputs),
    Dp(DpInputs),
    Euler(EulerInputs),
    Nlp(NlpInputs),
}

/// A scenario whose inputs parsed and passed validation.
#[derive(Clone, Debug, PartialEq)]
pub struct Job {
    pub scenario: Scenario,
    pub payload: Payload,
}

fn parse<T: DeserializeOwned>(name: &str, v: &Value) -> Result<T, String> {
    T::deserialize(v).map_err(|e| format!("scenario {name:?}: inputs: {e}"))
}

fn require_state(name: &str, m: &ModelRef, x: &[f64], w: usize) -> Result<(), String> {
    if m.model.state_index(x).is_none() {
        return Err(format!("scenario {name:?}: x = {x:?} is not a grid state"));
    }
    if w >= m.model.shocks() {
        return Err(format!("scenario {name:?}: shock {w} out of range"));
    }
    Ok(())
}

impl Scenario {
    /// Parse and check the inputs; `seed` overrides the scenario's own.
    pub fn validate(&self, seed: Option<u64>) -> Result<Job, String> {
        let name = &self.name;
        let name_ok = !name.is_empty()
            && !name.starts_with('.')
            && name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
        if !name_ok {
            return Err(format!("scenario name {name:?} must be nonempty ASCII letters, digits, '-', '_' or '.'"));
        }
        self.tolerances.validate().map_err(|e| format!("scenario {name:?}: {e}"))?;
        if self.refinement.contains(&0) {
            return Err(format!("scenario {name:?}: refinement levels must be positive"));
        }
        let mut scenario = self.clone();
        if seed.is_some() {
            scenario.seed = seed;
        }
        let payload = match self.kind {
            Kind::Geometry => {
                let g: GeometryInputs = parse(name, &self.inputs)?;
                if g.a.dim() != g.b.dim() {
                    return Err(format!("scenario {name:?}: sets differ in dimension"));
                }
                Payload::Geometry(g)
            }
            Kind::Integral => {
                let i: IntegralInputs = parse(name, &self.inputs)?;
                if i.map.len() != i.measure.len() {
                    return Err(format!("scenario {name:?}: one set per atom expected"));
                }
                Payload::Integral(i)
            }
            Kind::Leibniz => {
                let l: LeibnizInputs = parse(name, &self.inputs)?;
                match (&l.integrand, &l.measure, &l.family) {
                    (Some(phi), Some(m), None) => {
                        if phi.len() != m.len() {
                            return Err(format!("scenario {name:?}: one atom function per measure atom expected"));
                        }
                        if phi.dim() != l.x.len() {
                            return Err(format!("scenario {name:?}: x has the wrong dimension"));
                        }
                    }
                    (None, None, Some(f)) => {
                        if self.refinement.is_empty() {
                            return Err(format!("scenario {name:?}: a family needs a refinement list"));
                        }
                        if !(f.interval[0] < f.interval[1]) || l.x.len() != 1 {
                            return Err(format!("scenario {name:?}: families live on an interval of the line"));
                        }
                    }
                    _ => {
                        return Err(format!(
                            "scenario {name:?}: give either integrand and measure, or a family"
                        ))
                    }
                }
                if l.oracle && scenario.seed.is_none() {
                    return Err(format!("scenario {name:?}: the sampling oracle needs a seed"));
                }
                Payload::Leibniz(l)
            }
            Kind::Lyapunov => {
                let l: LyapunovInputs = parse(name, &self.inputs)?;
                if self.refinement.is_empty() {
                    return Err(format!("scenario {name:?}: a refinement list is required"));
                }
                if !(l.interval[0] < l.interval[1]) {
                    return Err(format!("scenario {name:?}: empty interval"));
                }
                Payload::Lyapunov(l)
            }
            Kind::Dp => {
                let d: DpInputs = parse(name, &self.inputs)?;
                require_state(name, &d.model, &d.x, d.w)?;
                if !(d.vi_tol > 0.0) {
                    return Err(format!("scenario {name:?}: vi_tol must be positive"));
                }
                Payload::Dp(d)
            }
            Kind::Euler => {
                let e: EulerInputs = parse(name, &self.inputs)?;
                require_state(name, &e.model, &e.x, e.w)?;
                if !(e.vi_tol > 0.0) || e.cone_radius.is_some_and(|r| !(r > 0.0)) {
                    return Err(format!("scenario {name:?}: vi_tol and cone_radius must be positive"));
                }
                if e.perturb.as_ref().is_some_and(|p| p.len() != e.x.len()) {
                    return Err(format!("scenario {name:?}: perturbation has the wrong dimension"));
                }
                Payload::Euler(e)
            }
            Kind::Nlp => {
                let n: NlpInputs = parse(name, &self.inputs)?;
                require_state(name, &n.model, &n.x, n.w)?;
                Payload::Nlp(n)
            }
        };
        Ok(Job { scenario, payload })
    }
}

/// Top-level file: `{"seed": …, "scenarios": [scenario | {"builtin": name}]}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub scenarios: Vec<Value>,
}

impl ScenarioFile {
    pub fn from_scenarios(scenarios: &[Scenario]) -> ScenarioFile {
        ScenarioFile {
            seed: None,
            scenarios: scenarios
                .iter()
                .map(|s| serde_json::to_value(s).expect("scenarios serialize"))
                .collect(),
        }
    }

    pub fn parse(text: &str) -> Result<ScenarioFile, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse(format!("scenario file: {e}")))
    }

    /// Resolve builtin references and validate every scenario.
    pub fn jobs(&self, seed: Option<u64>) -> Result<Vec<Job>, CliError> {
        let mut names = BTreeSet::new();
        let mut jobs = Vec::with_capacity(self.scenarios.len());
        for (k, entry) in self.scenarios.iter().enumerate() {
            let mut scenario = match entry.get("builtin") {
                Some(b) => {
                    let b = b.as_str().unwrap_or_default();
                    super::builtins::find(b)
                        .ok_or_else(|| CliError::Parse(format!("entry {k}: unknown builtin {b:?}")))?
                }
                None => Scenario::deserialize(entry)
                    .map_err(|e| CliError::Parse(format!("entry {k}: {e}")))?,
            };
            if scenario.seed.is_none() {
                scenario.seed = self.seed;
            }
            if !names.insert(scenario.name.clone()) {
                return Err(CliError::Parse(format!("duplicate scenario name {:?}", scenario.name)));
            }
            jobs.push(scenario.validate(seed).map_err(CliError::Parse)?);
        }
        Ok(jobs)
    }
}
