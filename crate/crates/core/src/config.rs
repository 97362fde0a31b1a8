//! Experiment configuration: one JSON file holding every knob, plus a stable
//! content hash that is embedded in all derived artifacts.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::architectures::{ArchitectureId, Dims};
use crate::error::{Error, Result};
use crate::eval::{Cohort, SigmaMode};
use crate::features::DEFAULT_LOOKBACK_DAYS;
use crate::forest::ForestConfig;
use crate::labeling::ChurnConfig;
use crate::nn::TrainConfig;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    pub churn: ChurnConfig,
    pub train: TrainConfig,
    pub forest: ForestConfig,
    pub dims: Dims,
    /// Architectures to evaluate, in report order.
    pub architectures: Vec<ArchitectureId>,
    pub folds: usize,
    /// Master seed threaded into synth/train/forest/fold seeds.
    pub seed: u64,
    pub cohort: Cohort,
    pub sigma_mode: SigmaMode,
    pub lookback_days: i64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            synth: SynthConfig::default(),
            churn: ChurnConfig::default(),
            train: TrainConfig::default(),
            forest: ForestConfig::default(),
            dims: Dims::default(),
            architectures: ArchitectureId::ALL.to_vec(),
            folds: 10,
            seed: 0,
            cohort: Cohort::All,
            sigma_mode: SigmaMode::StandardError,
            lookback_days: DEFAULT_LOOKBACK_DAYS,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&content)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.churn.validate()?;
        self.train.validate()?;
        self.forest.validate()?;
        if self.folds < 2 {
            return Err(Error::Config("folds must be >= 2".into()));
        }
        if self.architectures.is_empty() {
            return Err(Error::Config("architecture list must not be empty".into()));
        }
        if self.lookback_days < self.churn.observation_days {
            return Err(Error::Config(
                "lookback_days must cover at least the observation window".into(),
            ));
        }
        Ok(())
    }

    /// Applies the master seed to every sub-config, so one knob controls the
    /// whole pipeline.
    pub fn with_master_seed(mut self, seed: u64) -> ExperimentConfig {
        self.seed = seed;
        self.synth.seed = seed;
        self.train.seed = seed.wrapping_add(1);
        self.forest.seed = seed.wrapping_add(2);
        self
    }

    /// SHA-256 of the canonical JSON serialization (hex, first 16 chars).
    /// Stable across runs for identical configs.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut hex = String::with_capacity(16);
        for byte in digest.iter().take(8) {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}
