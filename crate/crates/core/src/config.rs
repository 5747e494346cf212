//! Scenario configuration.
//!
//! A configuration is a flat TOML key-value document. `scenario` names a
//! registry entry that supplies defaults for every other key; the remaining
//! keys override them:
//!
//! ```toml
//! scenario = "constant-gaussian"
//! M = 100
//! seed = 1
//! law.kind = "gaussian"
//! r_grid = [0.1, 0.2, 0.3, 0.5]
//! ```
//!
//! Validation collects every problem before reporting.

use std::path::{Path, PathBuf};

use serde::Serialize;
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::innovations::{gc_alpha_for, LawKind};
use crate::scenarios;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Euler,
    RobbinsMonro,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LawConfig {
    pub kind: LawKind,
    pub dim: usize,
    /// Explicit GC constant; the bundled one when absent.
    pub alpha: Option<f64>,
}

impl LawConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or_else(|| gc_alpha_for(self.kind))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub family: Family,
    pub seed: u64,
    /// `R`.
    pub replications: usize,
    pub confidence: f64,
    pub r_grid: Vec<f64>,
    pub enumerate: bool,
    pub law: LawConfig,
    /// `N`.
    pub steps: usize,
    pub model: String,
    /// `T`.
    pub horizon: f64,
    /// `M`.
    pub samples: usize,
    pub x0: Vec<f64>,
    /// `c_q`; `2√q` when absent.
    pub c_q: Option<f64>,
    /// Pilot budget as a multiple of `M` when no exact reference mean exists.
    pub pilot_factor: usize,
    pub problem: String,
    pub c: f64,
    pub rho: f64,
    pub theta0: Vec<f64>,
    pub output: Option<PathBuf>,
}

pub const KEYS: &[&str] = &[
    "scenario", "seed", "R", "confidence", "r_grid", "enumerate", "law.kind", "law.dim", "law.alpha", "N",
    "model", "T", "M", "x0", "cq", "pilot_factor", "problem", "c", "rho", "theta0", "output",
];

fn flatten(prefix: &str, table: &Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn as_count(v: &Value) -> Option<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Some(*i as usize),
        _ => None,
    }
}

fn as_f64_list(v: &Value) -> Option<Vec<f64>> {
    match v {
        Value::Array(a) => a.iter().map(as_f64).collect(),
        other => as_f64(other).map(|x| vec![x]),
    }
}

impl ScenarioConfig {
    /// Defaults of the named registry scenario.
    pub fn for_scenario(name: &str) -> Result<Self> {
        scenarios::defaults(name).ok_or_else(|| {
            Error::Config(vec![format!(
                "unknown scenario `{name}`; available: {}",
                scenarios::SCENARIO_NAMES.join(", ")
            )])
        })
    }

    /// Parses a TOML document, fills defaults from its `scenario`, applies
    /// the remaining keys and validates.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(vec![format!("parse error: {e}")]))?;
        let mut pairs = Vec::new();
        flatten("", &table, &mut pairs);
        let name = match pairs.iter().find(|(k, _)| k == "scenario").map(|(_, v)| v) {
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(Error::Config(vec!["`scenario` must be a string".into()])),
            None => return Err(Error::Config(vec!["missing required key `scenario`".into()])),
        };
        let mut cfg = Self::for_scenario(&name)?;
        cfg.apply(pairs.iter().filter(|(k, _)| k != "scenario").map(|(k, v)| (k.as_str(), v)))?;
        Ok(cfg)
    }

    /// Applies key-value overrides, then validates. All failures are reported together.
    pub fn apply<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a Value)>) -> Result<()> {
        let mut errors = Vec::new();
        for (key, value) in pairs {
            if let Err(msg) = self.set(key, value) {
                errors.push(msg);
            }
        }
        errors.extend(self.problems());
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    fn set(&mut self, key: &str, v: &Value) -> std::result::Result<(), String> {
        let bad = |what: &str| format!("`{key}` must be {what}");
        match key {
            "seed" => match v {
                Value::Integer(i) if *i >= 0 => self.seed = *i as u64,
                _ => return Err(bad("a nonnegative integer")),
            },
            "R" => self.replications = as_count(v).ok_or_else(|| bad("a nonnegative integer"))?,
            "N" => self.steps = as_count(v).ok_or_else(|| bad("a nonnegative integer"))?,
            "M" => self.samples = as_count(v).ok_or_else(|| bad("a nonnegative integer"))?,
            "pilot_factor" => self.pilot_factor = as_count(v).ok_or_else(|| bad("a nonnegative integer"))?,
            "law.dim" => self.law.dim = as_count(v).ok_or_else(|| bad("a nonnegative integer"))?,
            "confidence" => self.confidence = as_f64(v).ok_or_else(|| bad("a number"))?,
            "T" => self.horizon = as_f64(v).ok_or_else(|| bad("a number"))?,
            "c" => self.c = as_f64(v).ok_or_else(|| bad("a number"))?,
            "rho" => self.rho = as_f64(v).ok_or_else(|| bad("a number"))?,
            "cq" => self.c_q = Some(as_f64(v).ok_or_else(|| bad("a number"))?),
            "law.alpha" => self.law.alpha = Some(as_f64(v).ok_or_else(|| bad("a number"))?),
            "r_grid" => self.r_grid = as_f64_list(v).ok_or_else(|| bad("a list of numbers"))?,
            "x0" => self.x0 = as_f64_list(v).ok_or_else(|| bad("a list of numbers"))?,
            "theta0" => self.theta0 = as_f64_list(v).ok_or_else(|| bad("a list of numbers"))?,
            "enumerate" => self.enumerate = v.as_bool().ok_or_else(|| bad("a boolean"))?,
            "law.kind" => {
                let s = v.as_str().ok_or_else(|| bad("a string"))?;
                self.law.kind = s.parse().map_err(|e: Error| e.to_string())?;
            }
            "model" => self.model = v.as_str().ok_or_else(|| bad("a string"))?.to_string(),
            "problem" => self.problem = v.as_str().ok_or_else(|| bad("a string"))?.to_string(),
            "output" => self.output = Some(PathBuf::from(v.as_str().ok_or_else(|| bad("a string"))?)),
            "scenario" => return Err("`scenario` cannot be overridden".into()),
            other => return Err(format!("unknown key `{other}`; accepted keys: {}", KEYS.join(", "))),
        }
        Ok(())
    }

    /// Every validation failure of the current values.
    pub fn problems(&self) -> Vec<String> {
        let mut e = Vec::new();
        if self.steps == 0 {
            e.push("N must be ≥ 1".to_string());
        }
        if !self.enumerate && self.replications < 100 {
            e.push("R must be ≥ 100".to_string());
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            e.push("confidence must lie in (0, 1)".to_string());
        }
        if self.r_grid.is_empty() || self.r_grid.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            e.push("r_grid must be a nonempty list of nonnegative numbers".to_string());
        }
        if self.law.dim == 0 {
            e.push("law.dim must be ≥ 1".to_string());
        }
        if let Some(a) = self.law.alpha {
            if !(a > 0.0) {
                e.push("law.alpha must be > 0".to_string());
            }
        }
        match self.family {
            Family::Euler => {
                if self.samples == 0 {
                    e.push("M must be ≥ 1".to_string());
                }
                if !(self.horizon > 0.0) {
                    e.push("T must be > 0".to_string());
                }
                if let Some(c) = self.c_q {
                    if !(c > 0.0) {
                        e.push("cq must be > 0".to_string());
                    }
                }
                if !crate::euler::MODEL_NAMES.contains(&self.model.as_str()) {
                    e.push(format!(
                        "unknown model `{}`; available: {}",
                        self.model,
                        crate::euler::MODEL_NAMES.join(", ")
                    ));
                } else if self.model == "sin-vol" && self.law.dim != 1 {
                    e.push("model `sin-vol` needs law.dim = 1".to_string());
                }
                if self.x0.len() != self.law.dim {
                    e.push(format!("x0 has {} entries, expected law.dim = {}", self.x0.len(), self.law.dim));
                }
                if self.pilot_factor == 0 {
                    e.push("pilot_factor must be ≥ 1".to_string());
                }
            }
            Family::RobbinsMonro => {
                if !crate::robbins_monro::PROBLEM_NAMES.contains(&self.problem.as_str()) {
                    e.push(format!(
                        "unknown problem `{}`; available: {}",
                        self.problem,
                        crate::robbins_monro::PROBLEM_NAMES.join(", ")
                    ));
                }
                if !(self.c > 0.0) {
                    e.push("c must be > 0".to_string());
                }
                if !(self.rho > 0.5 && self.rho <= 1.0) {
                    e.push("rho must lie in (1/2, 1]".to_string());
                }
                if self.theta0.len() != self.law.dim {
                    e.push(format!("theta0 has {} entries, expected law.dim = {}", self.theta0.len(), self.law.dim));
                }
            }
        }
        if self.enumerate && self.law.kind != LawKind::Rademacher {
            e.push("enumerate = true requires law.kind = \"rademacher\"".to_string());
        }
        e
    }

    pub fn c_q(&self) -> f64 {
        self.c_q.unwrap_or_else(|| crate::euler::default_c_q(self.law.dim))
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    ScenarioConfig::from_toml_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ScenarioConfig::from_toml_str("scenario = \"constant-gaussian\"\nM = 100\nseed = 1\n").unwrap();
        assert_eq!(cfg.samples, 100);
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.steps, 10);
        assert_eq!(cfg.horizon, 1.0);
        assert_eq!(cfg.law.kind, LawKind::Gaussian);
        assert_eq!(cfg.law.alpha(), 2.0);
        assert_eq!(cfg.c_q(), 2.0);
    }

    #[test]
    fn dotted_and_table_keys() {
        let a = ScenarioConfig::from_toml_str("scenario = \"constant-gaussian\"\nlaw.kind = \"rademacher\"\n").unwrap();
        let b = ScenarioConfig::from_toml_str("scenario = \"constant-gaussian\"\n[law]\nkind = \"rademacher\"\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.law.kind, LawKind::Rademacher);
    }

    #[test]
    fn unknown_scenario_lists_registry() {
        let err = ScenarioConfig::from_toml_str("scenario = \"nope\"").unwrap_err().to_string();
        assert!(err.contains("constant-gaussian") && err.contains("mean-gaussian"), "{err}");
    }

    #[test]
    fn errors_are_aggregated() {
        let err = ScenarioConfig::from_toml_str("scenario = \"constant-gaussian\"\nM = 0\nR = 5\nbogus = 1\nlaw.kind = \"cauchy\"\n")
            .unwrap_err();
        let Error::Config(list) = err else { panic!("expected config error") };
        assert!(list.iter().any(|m| m == "M must be ≥ 1"), "{list:?}");
        assert!(list.iter().any(|m| m.contains("R must be")));
        assert!(list.iter().any(|m| m.contains("bogus")));
        assert!(list.iter().any(|m| m.contains("cauchy")));
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = ScenarioConfig::from_toml_str("scenario = \"constant-gaussian\"\nM = = 3\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }
}
