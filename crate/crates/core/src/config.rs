//! Experiment configuration: one JSON document that says where the
//! observations come from (a simulated scenario or a log file on disk),
//! what noise was injected, which bases to fit with, and how to report.

use crate::basis::BasisSpec;
use crate::noise::NoiseSpec;
use crate::simulator::ScenarioSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config invalid: {context}")]
    Invalid { context: String },
}

fn bad(context: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        context: context.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorVariant {
    /// Trend plus spline feedback curve on the same observations.
    #[default]
    TwoStage,
    /// Trend on the first half, feedback on the second.
    TwoStageSplit,
    /// Single slope from the noise alone.
    LinearSimple,
    /// Single slope after subtracting the fitted trend.
    LinearConditioned,
}

fn default_replicates() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSettings {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        BootstrapSettings {
            enabled: false,
            replicates: default_replicates(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Simulated data source; exactly one of this and `input_path`.
    #[serde(default)]
    pub scenario: Option<ScenarioSpec>,
    /// Observation-log data source; exactly one of this and `scenario`.
    #[serde(default)]
    pub input_path: Option<PathBuf>,
    /// The noise that was (or will be) injected; fits trust this.
    pub noise: NoiseSpec,
    pub mu_basis: BasisSpec,
    pub f_basis: BasisSpec,
    #[serde(default)]
    pub estimator: EstimatorVariant,
    #[serde(default)]
    pub bootstrap: BootstrapSettings,
    /// Directory for generated files; the CLI flag overrides it.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

/// A parsed config plus the hash of the exact bytes it came from, which
/// reports carry so a result names its inputs.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<LoadedConfig, ConfigError> {
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: ExperimentConfig = serde_json::from_slice(&bytes)?;
        config.validate()?;
        Ok(LoadedConfig {
            config,
            sha256: sha256_hex(&bytes),
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match (&self.scenario, &self.input_path) {
            (Some(_), Some(_)) => {
                return Err(bad("scenario and input_path are both set; pick one"));
            }
            (None, None) => {
                return Err(bad("one of scenario or input_path is required"));
            }
            _ => {}
        }
        self.noise
            .validate()
            .map_err(|e| bad(format!("noise: {e}")))?;
        self.mu_basis
            .validate()
            .map_err(|e| bad(format!("mu_basis: {e}")))?;
        if !self.mu_basis.include_intercept {
            return Err(bad("mu_basis: the trend basis must include an intercept"));
        }
        self.f_basis
            .validate_feedback_role()
            .map_err(|e| bad(format!("f_basis: {e}")))?;
        if let Some(s) = &self.scenario {
            s.validate().map_err(|e| bad(format!("scenario: {e}")))?;
            if std::mem::discriminant(&s.noise.kind) != std::mem::discriminant(&self.noise.kind) {
                return Err(bad(
                    "scenario.noise and noise declare different distributions",
                ));
            }
        }
        if self.bootstrap.enabled && self.bootstrap.replicates < 2 {
            return Err(bad(format!(
                "bootstrap.replicates = {} (need at least 2)",
                self.bootstrap.replicates
            )));
        }
        Ok(())
    }
}
