//! Run configuration: a flat `key = value` file, overridable from the
//! command line.
//!
//! ```text
//! # comment
//! model = sir_mass_action
//! n_starts = 32
//! seed = 7
//! units = raw
//! t0 = 2015-01-17
//! bounds.beta = 0, 1
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::Units;
use crate::error::{Error, Result};
use crate::estimation::{FitOptions, Tolerances};
use crate::models::{Bounds, ModelKind, ModelSpec, DEFAULT_HANDLING_TIME_EXPLORATION_LOWER, DEFAULT_POPULATION_CAP};
use crate::ode::DEFAULT_STEP;
use crate::uncertainty::DEFAULT_REL_STEP;

pub const KEYS: [&str; 14] = [
    "model",
    "grid_step",
    "n_starts",
    "seed",
    "rel_step",
    "function_tol",
    "param_tol",
    "max_evals",
    "dedup_tol",
    "units",
    "t0",
    "population_cap",
    "handling_time_lower",
    "bounds.<parameter>",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelKind,
    pub grid_step: f64,
    pub n_starts: usize,
    pub seed: u64,
    pub rel_step: f64,
    pub tolerances: Tolerances,
    pub units: Units,
    /// Calendar date of day 0; used only for axis labels.
    pub t0: Option<NaiveDate>,
    pub population_cap: f64,
    pub handling_time_lower: f64,
    /// Per-parameter fitting bounds replacing the model defaults.
    pub bounds: BTreeMap<String, (f64, f64)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::SirMassAction,
            grid_step: DEFAULT_STEP,
            n_starts: 32,
            seed: 0,
            rel_step: DEFAULT_REL_STEP,
            tolerances: Tolerances::default(),
            units: Units::Thousands,
            t0: None,
            population_cap: DEFAULT_POPULATION_CAP,
            handling_time_lower: DEFAULT_HANDLING_TIME_EXPLORATION_LOWER,
            bounds: BTreeMap::new(),
        }
    }
}

fn number(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Config(format!("{key}: expected a number, got {value:?}")))
}

fn positive(key: &str, value: &str) -> Result<f64> {
    let v = number(key, value)?;
    if v <= 0.0 {
        return Err(Error::Config(format!("{key} must be > 0, got {v}")));
    }
    Ok(v)
}

fn count(key: &str, value: &str) -> Result<usize> {
    match value.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(Error::Config(format!("{key} must be a positive integer, got {value:?}"))),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse { path: path.to_path_buf(), line, message },
            other => other,
        })
    }

    /// Parses `key = value` lines on top of the defaults. Blank lines and
    /// `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_error = |message: String| Error::Parse { path: "<config>".into(), line: i as u64 + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_error(format!("expected `key = value`, got {line:?}")))?;
            config.set(key.trim(), value.trim()).map_err(|e| parse_error(e.to_string()))?;
        }
        Ok(config)
    }

    /// Sets one setting by its file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "model" => self.model = value.parse()?,
            "grid_step" => self.grid_step = positive(key, value)?,
            "n_starts" => self.n_starts = count(key, value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| Error::Config(format!("seed must be an unsigned integer, got {value:?}")))?
            }
            "rel_step" => self.rel_step = positive(key, value)?,
            "function_tol" => self.tolerances.function_tol = positive(key, value)?,
            "param_tol" => self.tolerances.param_tol = positive(key, value)?,
            "max_evals" => self.tolerances.max_evals = count(key, value)?,
            "dedup_tol" => self.tolerances.dedup_tol = positive(key, value)?,
            "units" => self.units = value.parse()?,
            "t0" => {
                self.t0 = Some(
                    NaiveDate::parse_from_str(value, "%Y-%m-%d")
                        .map_err(|e| Error::Config(format!("t0 must be an ISO date (YYYY-MM-DD): {value:?}: {e}")))?,
                )
            }
            "population_cap" => self.population_cap = positive(key, value)?,
            "handling_time_lower" => self.handling_time_lower = number(key, value)?,
            _ => {
                if let Some(name) = key.strip_prefix("bounds.") {
                    let (lo, hi) = value
                        .split_once(',')
                        .ok_or_else(|| Error::Config(format!("{key}: expected `lower, upper`, got {value:?}")))?;
                    let lo = lo.trim();
                    let hi = hi.trim();
                    let parse_end = |s: &str| -> Result<f64> {
                        match s {
                            "inf" | "+inf" => Ok(f64::INFINITY),
                            "-inf" => Ok(f64::NEG_INFINITY),
                            _ => number(key, s),
                        }
                    };
                    self.bounds.insert(name.to_string(), (parse_end(lo)?, parse_end(hi)?));
                } else {
                    return Err(Error::Config(format!("unknown key {key:?}; known keys: {}", KEYS.join(", "))));
                }
            }
        }
        Ok(())
    }

    /// Checks settings that only make sense together.
    pub fn validate(&self) -> Result<()> {
        self.model_spec().map(|_| ())
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        self.model_spec_for(self.model)
    }

    /// The model box for `kind` with this config's cap and overrides. Bound
    /// overrides naming parameters `kind` lacks are skipped.
    pub fn model_spec_for(&self, kind: ModelKind) -> Result<ModelSpec> {
        let mut spec = ModelSpec::with_population_cap(kind, self.population_cap)
            .with_handling_time_exploration_lower(self.handling_time_lower);
        for (name, (lo, hi)) in &self.bounds {
            if kind.parameter_names().contains(&name.as_str()) {
                spec = spec.with_bounds(name, Bounds::new(*lo, *hi))?;
            } else if kind == self.model {
                return Err(Error::Config(format!(
                    "bounds.{name}: {kind} has no such parameter (parameters: {})",
                    kind.parameter_names().join(", ")
                )));
            }
        }
        Ok(spec)
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            n_starts: self.n_starts,
            seed: self.seed,
            tolerances: self.tolerances,
            grid_step: self.grid_step,
            extra_starts: Vec::new(),
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn canonical_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
