//! Experiment configuration: embedded defaults, TOML loading, validation.
//!
//! A config file is plain TOML with two optional tables, `evo` and `eval`,
//! mirroring the optimizer and simulator settings. Every key falls back to
//! the built-in default, so an empty file reproduces the reference
//! experiment: three runs per voltage at 14.8 V and 12.0 V with seeds
//! `base_seed + run_index`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nsga2::EvoConfig;
use crate::sim::EvalConfig;

/// Supply voltages the servo table covers, volts.
pub const VOLTAGE_RANGE: (f64, f64) = (12.0, 14.8);

/// Errors raised while loading or validating a configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Full description of one dual-voltage experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Supply voltages to evolve at, each within `VOLTAGE_RANGE`.
    pub voltages: Vec<f64>,
    /// Independent seeded runs per voltage.
    pub runs_per_voltage: usize,
    /// Seed of the first run; run `i` uses `base_seed + i`.
    pub base_seed: u64,
    /// Directory receiving archives, reports, and figures.
    pub output_dir: PathBuf,
    /// Optimizer settings.
    pub evo: EvoConfig,
    /// Simulator settings; the per-run voltage overrides `eval.voltage`.
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            voltages: vec![14.8, 12.0],
            runs_per_voltage: 3,
            base_seed: 1,
            output_dir: PathBuf::from("out"),
            evo: EvoConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses a TOML config and validates it.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let config: ExperimentConfig = toml::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    /// Checks every invariant a run relies on.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.voltages.is_empty() {
            return Err(ConfigError::Invalid("at least one voltage required".into()));
        }
        for &v in &self.voltages {
            if !(VOLTAGE_RANGE.0..=VOLTAGE_RANGE.1).contains(&v) {
                return Err(ConfigError::Invalid(format!(
                    "voltage {v} outside the supported range {}..={} V",
                    VOLTAGE_RANGE.0, VOLTAGE_RANGE.1
                )));
            }
        }
        if self.runs_per_voltage == 0 {
            return Err(ConfigError::Invalid("runs_per_voltage must be >= 1".into()));
        }
        if self.evo.population < 2 {
            return Err(ConfigError::Invalid("population must be >= 2".into()));
        }
        if self.evo.generations == 0 {
            return Err(ConfigError::Invalid("generations must be >= 1".into()));
        }
        Ok(())
    }

    /// Seed assigned to run `run_index` at every voltage.
    pub fn run_seed(&self, run_index: usize) -> u64 {
        self.base_seed + run_index as u64
    }
}
