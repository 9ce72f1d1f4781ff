use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    QfiB,
    QfiOmega,
    DetunedSweep,
    Adaptive,
    CrossingDemo,
    Convergence,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::QfiB => "qfi-b",
            Scenario::QfiOmega => "qfi-omega",
            Scenario::DetunedSweep => "detuned-sweep",
            Scenario::Adaptive => "adaptive",
            Scenario::CrossingDemo => "crossing-demo",
            Scenario::Convergence => "convergence",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// A scalar or a list in the TOML file.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    pub fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Durations either listed explicitly or as `count` evenly spaced values.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum TGrid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, count: usize },
}

impl TGrid {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            TGrid::List(ref v) => v.clone(),
            TGrid::Range { start, stop, count } => match count {
                0 => Vec::new(),
                1 => vec![start],
                _ => (0..count)
                    .map(|k| start + (stop - start) * k as f64 / (count - 1) as f64)
                    .collect(),
            },
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParameters {
    #[serde(rename = "B")]
    b: Option<f64>,
    omega: Option<OneOrMany<f64>>,
    omega_c: Option<OneOrMany<f64>>,
    #[serde(rename = "T")]
    t: Option<TGrid>,
    steps: Option<OneOrMany<f64>>,
    #[serde(rename = "N")]
    n: Option<u64>,
    seed: Option<u64>,
    #[serde(rename = "I0")]
    i0: Option<f64>,
    #[serde(rename = "target_T")]
    target_t: Option<f64>,
    rounds: Option<usize>,
    replicas: Option<usize>,
    l: Option<OneOrMany<i64>>,
    richardson: Option<bool>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub format: Format,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Scenario,
    parameters: RawParameters,
    output: OutputSpec,
}

/// Validated parameters with scenario defaults filled in.
#[derive(Clone, Debug)]
pub struct Parameters {
    pub b: f64,
    pub omega: Vec<f64>,
    pub omega_c: Vec<f64>,
    pub t: Vec<f64>,
    pub steps: Vec<f64>,
    pub n: u64,
    pub seed: u64,
    pub i0: f64,
    pub target_t: f64,
    pub rounds: Option<usize>,
    pub replicas: usize,
    pub l: Vec<i64>,
    pub richardson: bool,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub parameters: Parameters,
    pub output: OutputSpec,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(bad(format!("{name} must be finite and positive, got {v}")))
    }
}

fn increasing(name: &str, v: &[f64]) -> Result<(), CliError> {
    if v.is_empty() {
        return Err(bad(format!("{name} grid is empty")));
    }
    if let Some(w) = v.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(bad(format!("{name} grid is not strictly increasing ({} then {})", w[0], w[1])));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        let parameters = validate(raw.scenario, raw.parameters)?;
        Ok(ExperimentConfig { scenario: raw.scenario, parameters, output: raw.output })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

/// Scenario name of a config that may not validate, for error context.
pub fn peek_scenario(path: &Path) -> Option<&'static str> {
    let table: toml::Table = std::fs::read_to_string(path).ok()?.parse().ok()?;
    let value = table.get("scenario")?.clone();
    value.try_into::<Scenario>().ok().map(Scenario::name)
}

fn validate(scenario: Scenario, raw: RawParameters) -> Result<Parameters, CliError> {
    let b = positive("B", raw.b.unwrap_or(1.0))?;
    let omega = raw.omega.map(OneOrMany::into_vec).unwrap_or_else(|| vec![1.0]);
    if omega.is_empty() {
        return Err(bad("omega list is empty"));
    }
    for &w in &omega {
        positive("omega", w)?;
    }
    let omega_c = raw.omega_c.map(OneOrMany::into_vec).unwrap_or_default();
    for &w in &omega_c {
        positive("omega_c", w)?;
    }

    let t = raw.t.map(|g| g.values()).unwrap_or_default();
    let steps = match (raw.steps, scenario) {
        (Some(s), _) => s.into_vec(),
        (None, Scenario::Convergence) => return Err(bad("convergence needs an explicit `steps` list")),
        (None, Scenario::Adaptive) => vec![32.0],
        (None, _) => vec![4096.0],
    };
    for &s in &steps {
        positive("steps", s)?;
    }
    if scenario == Scenario::Convergence {
        increasing("steps", &steps)?;
    } else if steps.len() != 1 {
        return Err(bad(format!("scenario {} takes a single `steps` value", scenario.name())));
    }

    match scenario {
        Scenario::QfiB | Scenario::QfiOmega | Scenario::Convergence => {
            increasing("T", &t)?;
        }
        Scenario::DetunedSweep => {
            increasing("T", &t)?;
            if omega.len() != 1 {
                return Err(bad("detuned-sweep takes a single true omega"));
            }
            if omega_c.is_empty() {
                return Err(bad("detuned-sweep needs a non-empty omega_c list"));
            }
        }
        Scenario::Adaptive | Scenario::CrossingDemo => {
            if !t.is_empty() {
                increasing("T", &t)?;
            }
        }
    }
    for &x in &t {
        positive("T", x)?;
    }

    let n = raw.n.unwrap_or(1000);
    if n == 0 {
        return Err(bad("N must be at least 1"));
    }
    let replicas = raw.replicas.unwrap_or(200);
    if replicas == 0 {
        return Err(bad("replicas must be at least 1"));
    }
    let (i0, target_t) = match scenario {
        Scenario::Adaptive => {
            let i0 = raw.i0.ok_or_else(|| bad("adaptive needs I0"))?;
            let target = raw.target_t.ok_or_else(|| bad("adaptive needs target_T"))?;
            if omega.len() != 1 {
                return Err(bad("adaptive takes a single true omega"));
            }
            (positive("I0", i0)?, positive("target_T", target)?)
        }
        _ => (raw.i0.unwrap_or(0.0), raw.target_t.unwrap_or(0.0)),
    };
    let l = raw.l.map(OneOrMany::into_vec).unwrap_or_else(|| vec![0, 1, 2]);
    if scenario == Scenario::CrossingDemo && l.is_empty() {
        return Err(bad("crossing-demo needs at least one pulse index l"));
    }

    Ok(Parameters {
        b,
        omega,
        omega_c,
        t,
        steps,
        n,
        seed: raw.seed.unwrap_or(0),
        i0,
        target_t,
        rounds: raw.rounds,
        replicas,
        l,
        richardson: raw.richardson.unwrap_or(false),
    })
}

/// Shape of the configuration file, printed by `qfi schema`.
pub fn schema() -> serde_json::Value {
    serde_json::json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "qfi experiment",
        "type": "object",
        "required": ["scenario", "parameters", "output"],
        "additionalProperties": false,
        "properties": {
            "scenario": {
                "enum": ["qfi-b", "qfi-omega", "detuned-sweep", "adaptive", "crossing-demo", "convergence"]
            },
            "parameters": {
                "type": "object",
                "additionalProperties": false,
                "properties": {
                    "B": {"type": "number", "exclusiveMinimum": 0, "default": 1.0},
                    "omega": {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}}], "default": 1.0},
                    "omega_c": {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}}],
                                "description": "control frequencies (detuned-sweep)"},
                    "T": {"oneOf": [
                        {"type": "array", "items": {"type": "number"}, "minItems": 1,
                         "description": "strictly increasing durations"},
                        {"type": "object", "required": ["start", "stop", "count"],
                         "properties": {"start": {"type": "number"}, "stop": {"type": "number"},
                                        "count": {"type": "integer", "minimum": 1}}}
                    ]},
                    "steps": {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}}],
                              "description": "time slices per unit time; a strictly increasing list for convergence",
                              "default": "4096 (32 for adaptive)"},
                    "N": {"type": "integer", "minimum": 1, "default": 1000},
                    "seed": {"type": "integer", "minimum": 0, "default": 0},
                    "I0": {"type": "number", "description": "initial Fisher information (adaptive)"},
                    "target_T": {"type": "number", "description": "final evolution time (adaptive)"},
                    "rounds": {"type": "integer", "description": "override the number of adaptive rounds"},
                    "replicas": {"type": "integer", "minimum": 1, "default": 200},
                    "l": {"oneOf": [{"type": "integer"}, {"type": "array", "items": {"type": "integer"}}],
                          "default": [0, 1, 2], "description": "pulse areas (l + 1/2)pi (crossing-demo)"},
                    "richardson": {"type": "boolean", "default": false,
                                   "description": "extrapolate the generator in the step size (detuned-sweep)"}
                }
            },
            "output": {
                "type": "object",
                "required": ["path"],
                "additionalProperties": false,
                "properties": {
                    "path": {"type": "string"},
                    "format": {"enum": ["csv", "json"], "default": "csv"}
                }
            }
        }
    })
}
