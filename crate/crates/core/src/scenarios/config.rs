//! Scenario configuration files.
//!
//! The format is line based UTF-8 text:
//!
//! ```text
//! # comment
//! scenario = so3_two_axis
//! [horizon]            # prefixes the following keys with "horizon."
//! t1 = 6.5
//! initial.xi = 0.3, 1, 0.2
//! ```
//!
//! Keys are dotted paths, values are a single token or a comma separated list.
//! Recognized keys:
//!
//! | key | value |
//! |-----|-------|
//! | `scenario` (or `problem.name`) | builtin name |
//! | `algebroid.name` | constructor of the builtin, checked if given |
//! | `algebroid.<param>`, `problem.<param>` | numbers, see `algoc list` |
//! | `horizon.t0`, `horizon.t1` | numbers |
//! | `horizon.free` | `true` or `false` |
//! | `initial.x0`, `initial.xi` | number lists |
//! | `initial.xi0` | `-1` or `0` |
//! | `numerics.steps` | positive integer |
//! | `numerics.tol` | positive number |
//! | `outputs.dir` | directory |
//! | `outputs.reports` | subset of `axioms, trajectory, pmp, pairing, homotopy, cone` |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Report groups a run can produce.
pub const REPORT_NAMES: [&str; 6] = ["axioms", "trajectory", "pmp", "pairing", "homotopy", "cone"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub algebroid: Option<String>,
    /// `algebroid.*` and `problem.*` parameters keyed by their full dotted name.
    pub params: BTreeMap<String, Vec<f64>>,
    pub t0: Option<f64>,
    pub t1: Option<f64>,
    pub free: Option<bool>,
    pub x0: Option<Vec<f64>>,
    pub xi: Option<Vec<f64>>,
    pub xi0: Option<f64>,
    pub steps: Option<usize>,
    pub tol: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub reports: Option<Vec<String>>,
}

fn numbers(key: &str, raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{key}: '{}' is not a number", t.trim())))
        })
        .collect()
}

fn number(key: &str, raw: &str) -> Result<f64> {
    match numbers(key, raw)?.as_slice() {
        [v] => Ok(*v),
        _ => Err(Error::Config(format!("{key}: expected a single number"))),
    }
}

impl ScenarioConfig {
    /// A configuration that runs a builtin with its defaults.
    pub fn builtin(name: &str) -> Self {
        ScenarioConfig {
            scenario: name.to_string(),
            ..Default::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ScenarioConfig::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::Config(format!("line {}: {msg}", lineno + 1));
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| at("unterminated section header".into()))?
                    .trim();
                section = if name.is_empty() {
                    String::new()
                } else {
                    format!("{name}.")
                };
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected 'key = value', found '{line}'")))?;
            let key = format!("{section}{}", k.trim());
            let value = v.trim();
            if value.is_empty() {
                return Err(at(format!("{key} has no value")));
            }
            cfg.set(&key, value).map_err(|e| match e {
                Error::Config(msg) => at(msg),
                other => other,
            })?;
        }
        if cfg.scenario.is_empty() {
            return Err(Error::Config("missing 'scenario'".into()));
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "scenario" | "problem.name" => self.scenario = value.to_string(),
            "algebroid.name" => self.algebroid = Some(value.to_string()),
            "horizon.t0" => self.t0 = Some(number(key, value)?),
            "horizon.t1" => self.t1 = Some(number(key, value)?),
            "horizon.free" => {
                self.free = Some(match value {
                    "true" => true,
                    "false" => false,
                    _ => return Err(Error::Config(format!("{key}: expected true or false"))),
                })
            }
            "initial.x0" => self.x0 = Some(numbers(key, value)?),
            "initial.xi" => self.xi = Some(numbers(key, value)?),
            "initial.xi0" => self.xi0 = Some(number(key, value)?),
            "numerics.steps" => {
                let s: usize = value
                    .parse()
                    .map_err(|_| Error::Config(format!("{key}: expected a positive integer")))?;
                if s == 0 {
                    return Err(Error::Config(format!("{key}: expected a positive integer")));
                }
                self.steps = Some(s);
            }
            "numerics.tol" => {
                let t = number(key, value)?;
                if !(t > 0.0) {
                    return Err(Error::Config(format!("{key}: expected a positive number")));
                }
                self.tol = Some(t);
            }
            "outputs.dir" => self.out_dir = Some(PathBuf::from(value)),
            "outputs.reports" => {
                let list: Vec<String> = value.split(',').map(|s| s.trim().to_string()).collect();
                if let Some(bad) = list.iter().find(|r| !REPORT_NAMES.contains(&r.as_str())) {
                    return Err(Error::Config(format!("{key}: unknown report '{bad}'")));
                }
                self.reports = Some(list);
            }
            k if k.starts_with("algebroid.") || k.starts_with("problem.") => {
                self.params.insert(k.to_string(), numbers(key, value)?);
            }
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Whether a report group was requested (all are, unless restricted).
    pub fn wants(&self, report: &str) -> bool {
        self.reports
            .as_ref()
            .is_none_or(|r| r.iter().any(|x| x == report))
    }
}
