//! Mini-batch training loop with a stratified validation split, early
//! stopping, and best-weight restore.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::features::LabeledSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    /// Optional global gradient-norm clip, the escape hatch for exploding
    /// gradients. Off by default.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 256,
            max_epochs: 100,
            patience: 10,
            validation_fraction: 0.1,
            seed: 0,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience < 1 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("validation_fraction must be in (0, 1)".into()));
        }
        if self.batch_size < 1 || self.max_epochs < 1 {
            return Err(Error::Config("batch_size and max_epochs must be >= 1".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// A model trainable by gradient descent on its flattened trainable
/// parameters. Implementations define the forward pass and the gradient of
/// the per-batch mean BCE loss.
pub trait GradientModel {
    /// Flattened copy of the trainable parameters, in a fixed order.
    fn trainable_params(&self) -> Vec<f64>;
    /// Writes back parameters in the order of [`GradientModel::trainable_params`].
    fn set_trainable_params(&mut self, params: &[f64]);
    /// Mean BCE loss over the batch plus its gradient w.r.t. the trainable
    /// parameters.
    fn batch_loss_grad(&self, batch: &[&LabeledSample]) -> (f64, Vec<f64>);
    /// Mean BCE loss only (validation path).
    fn batch_loss(&self, batch: &[&LabeledSample]) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Deterministic stratified split: shuffles each class with the config seed
/// and carves `validation_fraction` off per class.
fn stratified_split(
    samples: &[LabeledSample],
    fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0005_eed0_5117_u64);
    let mut pos: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].label == 1).collect();
    let mut neg: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].label == 0).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut val = Vec::new();
    let mut train = Vec::new();
    for class in [pos, neg] {
        // at least one validation row per non-empty class
        let k = ((class.len() as f64 * fraction).round() as usize)
            .max(usize::from(!class.is_empty()))
            .min(class.len().saturating_sub(1));
        val.extend_from_slice(&class[..k]);
        train.extend_from_slice(&class[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn mean_loss<M: GradientModel>(model: &M, samples: &[LabeledSample], idx: &[usize]) -> f64 {
    let batch: Vec<&LabeledSample> = idx.iter().map(|&i| &samples[i]).collect();
    model.batch_loss(&batch)
}

/// Trains the model in place; returns per-epoch history. The parameters left
/// on the model are those of the minimum-validation-loss epoch.
pub fn train<M: GradientModel>(
    model: &mut M,
    samples: &[LabeledSample],
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if samples.len() < 4 {
        return Err(Error::Data(format!(
            "training requires >= 4 samples, got {}",
            samples.len()
        )));
    }
    let (train_idx, val_idx) = stratified_split(samples, cfg.validation_fraction, cfg.seed);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::Data("degenerate train/validation split".into()));
    }

    let mut params = model.trainable_params();
    let mut adam = AdamState::new(params.len());
    let adam_cfg = cfg.adam();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));

    let mut order = train_idx.clone();
    let mut history = Vec::new();
    let mut best_params = params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&LabeledSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (loss, mut grads) = model.batch_loss_grad(&batch);
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite training loss at epoch {epoch}; consider setting clip_norm"
                )));
            }
            if let Some(max_norm) = cfg.clip_norm {
                let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > max_norm {
                    let scale = max_norm / norm;
                    for g in grads.iter_mut() {
                        *g *= scale;
                    }
                }
            }
            adam_step(&mut params, &grads, &mut adam, &adam_cfg);
            model.set_trainable_params(&params);
            epoch_loss += loss;
            batches += 1;
        }
        let train_loss = epoch_loss / batches as f64;
        let val_loss = mean_loss(model, samples, &val_idx);
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_params.copy_from_slice(&params);
        } else if epoch - best_epoch >= cfg.patience {
            break;
        }
    }

    model.set_trainable_params(&best_params);
    Ok(TrainHistory {
        epochs: history,
        best_epoch,
        best_val_loss: best_val,
    })
}
