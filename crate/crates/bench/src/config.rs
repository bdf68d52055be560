//! Declarative job descriptions, read from TOML and patched by CLI flags.

use std::fs;
use std::path::{Path, PathBuf};

use dppsd::channel::Constellation;
use dppsd::dpp::{LambdaSchedule, DEFAULT_EPSILON_COMPLEMENT};
use dppsd::predictor::{DatasetSpec, TrainerConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::detectors::DetectorId;
use crate::error::{BenchError, Result};

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(BenchError::io(path))?;
    toml::from_str(&text).map_err(|source| BenchError::Config {
        path: path.to_owned(),
        source,
    })
}

fn constellation(name: &str) -> Result<Constellation> {
    Constellation::by_name(name).map_err(|e| BenchError::invalid("constellation", e.to_string()))
}

fn default_constellation() -> String {
    "qpsk".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetJob {
    pub n_t: usize,
    pub n_r: usize,
    #[serde(default = "default_constellation")]
    pub constellation: String,
    pub snr_range_db: [f64; 2],
    pub sample_count: usize,
    pub seed: u64,
    pub output: PathBuf,
}

impl DatasetJob {
    pub fn to_spec(&self) -> Result<DatasetSpec> {
        if self.sample_count == 0 {
            return Err(BenchError::invalid("sample_count", "must be at least 1"));
        }
        let spec = DatasetSpec {
            n_t: self.n_t,
            n_r: self.n_r,
            constellation: constellation(&self.constellation)?,
            snr_range_db: (self.snr_range_db[0], self.snr_range_db[1]),
            sample_count: self.sample_count,
            seed: self.seed,
            noise_variance_override: None,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainJob {
    pub dataset: PathBuf,
    pub model_output: PathBuf,
    /// Defaults to the model path with a `.report.json` suffix.
    #[serde(default)]
    pub report_output: Option<PathBuf>,
    #[serde(default)]
    pub trainer: TrainerConfig,
}

impl TrainJob {
    pub fn report_path(&self) -> PathBuf {
        self.report_output
            .clone()
            .unwrap_or_else(|| self.model_output.with_extension("report.json"))
    }
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON_COMPLEMENT
}

/// One BER or complexity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub n_t: usize,
    pub n_r: usize,
    #[serde(default = "default_constellation")]
    pub constellation: String,
    pub snr_grid_db: Vec<f64>,
    pub trials_per_point: u64,
    pub detectors: Vec<DetectorId>,
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    /// Fixed λ₁ for every SNR point, overriding the table.
    #[serde(default)]
    pub lambda1: Option<f64>,
    #[serde(default)]
    pub lambda2: Option<f64>,
    /// Antenna count whose published λ row is used; defaults to `n_t`.
    #[serde(default)]
    pub lambda_table: Option<usize>,
    #[serde(default = "default_epsilon")]
    pub epsilon_complement: f64,
    pub seed: u64,
    /// Output stem: results go to `<stem>.csv` and `<stem>.json`.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Trials between checkpoint writes; 0 disables checkpointing.
    #[serde(default)]
    pub checkpoint_every: u64,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    /// Replaces the SNR-derived noise variance (diagnostics only).
    #[serde(default)]
    pub noise_variance_override: Option<f64>,
    /// Re-run terminated searches without termination and record whether
    /// stopping changed the answer.
    #[serde(default)]
    pub audit_termination: bool,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials_per_point == 0 {
            return Err(BenchError::invalid("trials_per_point", "must be at least 1"));
        }
        if self.snr_grid_db.is_empty() {
            return Err(BenchError::invalid("snr_grid_db", "must not be empty"));
        }
        if let Some(s) = self.snr_grid_db.iter().find(|s| !s.is_finite()) {
            return Err(BenchError::invalid("snr_grid_db", format!("{s} is not finite")));
        }
        if self.detectors.is_empty() {
            return Err(BenchError::invalid("detectors", "must name at least one detector"));
        }
        if self.n_t == 0 || self.n_r < self.n_t {
            return Err(BenchError::invalid(
                "n_r",
                format!("need n_r >= n_t >= 1, got n_t = {}, n_r = {}", self.n_t, self.n_r),
            ));
        }
        constellation(&self.constellation)?;
        if self.needs_model() && self.model_path.is_none() {
            return Err(BenchError::invalid("model_path", "required by the selected detectors"));
        }
        for (field, l) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if let Some(l) = l {
                if !(l >= 1.0) {
                    return Err(BenchError::invalid(field, format!("must be >= 1, got {l}")));
                }
            }
        }
        if !(self.epsilon_complement > 0.0 && self.epsilon_complement < 1.0) {
            return Err(BenchError::invalid("epsilon_complement", "must lie in (0, 1)"));
        }
        if let Some(v) = self.noise_variance_override {
            if !(v > 0.0) {
                return Err(BenchError::invalid("noise_variance_override", "must be positive"));
            }
        }
        if self.needs_model() {
            for &snr in &self.snr_grid_db {
                self.lambdas(snr)?;
            }
        }
        Ok(())
    }

    pub fn constellation(&self) -> Result<Constellation> {
        constellation(&self.constellation)
    }

    pub fn needs_model(&self) -> bool {
        self.detectors.iter().any(|d| d.needs_model())
    }

    /// `(λ₁, λ₂)` at `snr_db`: explicit overrides first, then the table.
    pub fn lambdas(&self, snr_db: f64) -> Result<(f64, f64)> {
        if let (Some(l1), Some(l2)) = (self.lambda1, self.lambda2) {
            return Ok((l1, l2));
        }
        let row = self.lambda_table.unwrap_or(self.n_t);
        let table = LambdaSchedule::published().with_alias(self.n_t, row);
        let (l1, l2) = table.lookup(self.n_t, snr_db)?;
        Ok((self.lambda1.unwrap_or(l1), self.lambda2.unwrap_or(l2)))
    }

    pub fn csv_path(&self) -> Option<PathBuf> {
        self.output.as_ref().map(|p| p.with_extension("csv"))
    }

    pub fn json_path(&self) -> Option<PathBuf> {
        self.output.as_ref().map(|p| p.with_extension("json"))
    }

    /// Canonical description of everything that affects the results.
    pub(crate) fn fingerprint(&self) -> String {
        let mut key = self.clone();
        key.output = None;
        key.checkpoint = None;
        key.checkpoint_every = 0;
        serde_json::to_string(&key).expect("spec serializes")
    }
}
