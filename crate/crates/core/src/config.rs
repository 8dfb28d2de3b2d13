//! Merged runtime configuration: training, losses, EDM schedule, model
//! widths, deformation ranges, and metric parameters. Every field has a
//! default; unknown JSON keys are rejected so typos fail loudly.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::deform::DeformConfig;
use crate::edm::EdmConfig;
use crate::losses::LossWeights;
use crate::model::ModelConfig;

/// Training-loop knobs. Desk-scale defaults; the paper-scale profile is
/// documented in the README.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Samples per optimizer step; must divide evenly into `accum_steps`.
    pub batch_size: usize,
    /// Micro-batches each optimizer step is split into.
    pub accum_steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Dataset size when shapes are generated rather than loaded.
    pub shapes: usize,
    /// Points per generated cloud.
    pub points: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 12,
            accum_steps: 4,
            learning_rate: 1e-3,
            seed: 0,
            shapes: 200,
            points: 256,
        }
    }
}

/// Evaluation-metric parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricParams {
    /// Correlation association threshold in normalized units.
    pub correlation_tau: f64,
    /// Relaxed-DAS distance window; 0 is the strict metric.
    pub das_window: f64,
    /// Retained PCA variance fraction for the keypoint prior.
    pub prior_variance: f64,
    /// KDE bandwidth scale on top of Scott's rule.
    pub prior_bandwidth: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            correlation_tau: 0.05,
            das_window: 0.1,
            prior_variance: 0.95,
            prior_bandwidth: 1.0,
        }
    }
}

/// The full merged configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub train: TrainConfig,
    pub loss: LossWeights,
    pub edm: EdmConfig,
    pub model: ModelConfig,
    pub deform: DeformConfig,
    pub metrics: MetricParams,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.train.batch_size == 0 || self.train.accum_steps == 0 {
            return Err("batch_size and accum_steps must be positive".into());
        }
        if self.train.batch_size % self.train.accum_steps != 0 {
            return Err(format!(
                "batch_size {} must be divisible by accum_steps {}",
                self.train.batch_size, self.train.accum_steps
            ));
        }
        self.loss.validate().map_err(|e| e.to_string())?;
        self.edm.validate()?;
        Ok(())
    }

    /// Short hash of the resolved configuration, echoed into outputs so
    /// runs can be traced back to their exact settings.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut out = String::with_capacity(16);
        for b in digest.iter().take(8) {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}
