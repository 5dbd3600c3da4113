//! The single JSON configuration shared by training, inference and
//! evaluation. Missing fields take their defaults; unknown fields are errors.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::BlockConfig;
use crate::grouping::{MeanShiftConfig, MergeConfig};
use crate::network::NetworkConfig;
use crate::train::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsisConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub blocks: BlockConfig,
    pub mean_shift: MeanShiftConfig,
    pub merge: MergeConfig,
    pub eval: EvalConfig,
}

impl AsisConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.network.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.train.validate().map_err(ConfigError::Invalid)?;
        let b = &self.blocks;
        if !(b.block_size > 0.0 && b.stride > 0.0 && b.stride <= b.block_size) || b.sample_size == 0 {
            return Err(ConfigError::Invalid(format!("blocks: {b:?}")));
        }
        let ms = &self.mean_shift;
        if !(ms.bandwidth > 0.0) || ms.max_iterations == 0 || !(ms.convergence_tol > 0.0) {
            return Err(ConfigError::Invalid(format!("mean_shift: {ms:?}")));
        }
        if !(self.merge.voxel_size > 0.0) || !(0.0..=1.0).contains(&self.merge.overlap_threshold) {
            return Err(ConfigError::Invalid(format!("merge: {:?}", self.merge)));
        }
        let t = self.eval.iou_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(ConfigError::Invalid(format!("eval.iou_threshold {t}")));
        }
        Ok(())
    }
}
