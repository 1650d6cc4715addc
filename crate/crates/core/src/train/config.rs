use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the encoder's squared error is reduced for the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossReduction {
    /// Mean over every element of the batch; gradient `2(p − t)/(B·D)`.
    Element,
    /// `½‖p − t‖²` averaged over the windows of a batch; gradient `(p − t)/B`.
    Window,
}

/// Optimiser and schedule settings shared by every training entry point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Apply weight decay to biases as well as weights.
    pub decay_biases: bool,
    pub batch_size: usize,
    pub epochs: usize,
    /// Input dropout at the first epoch.
    pub dropout_start: f64,
    /// Input dropout at the last epoch.
    pub dropout_end: f64,
    pub seed: u64,
    /// Greedy layerwise pretraining before joint training (experimental).
    pub pretrain: bool,
    pub pretrain_epochs: usize,
    /// Learning-rate multiplier used by fine-tuning.
    pub finetune_lr_factor: f64,
    /// Scaling of the encoder objective seen by the optimiser. Reported
    /// losses are always the per-element mean squared error.
    pub loss_reduction: LossReduction,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 0.0005,
            decay_biases: false,
            batch_size: 400,
            epochs: 100,
            dropout_start: 0.1,
            dropout_end: 0.3,
            seed: 0,
            pretrain: false,
            pretrain_epochs: 10,
            finetune_lr_factor: 0.1,
            loss_reduction: LossReduction::Window,
        }
    }
}

/// Batch sizes outside this range train but draw a warning.
pub const RECOMMENDED_BATCH: std::ops::RangeInclusive<usize> = 300..=500;

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            bad.push(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            bad.push(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            bad.push(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if !(0.0 <= self.dropout_start && self.dropout_start <= self.dropout_end && self.dropout_end < 1.0) {
            bad.push(format!(
                "dropout schedule needs 0 <= start <= end < 1, got {} -> {}",
                self.dropout_start, self.dropout_end
            ));
        }
        if self.batch_size == 0 {
            bad.push("batch_size must be positive".into());
        }
        if !(self.finetune_lr_factor > 0.0 && self.finetune_lr_factor.is_finite()) {
            bad.push(format!(
                "finetune_lr_factor must be > 0, got {}",
                self.finetune_lr_factor
            ));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    /// Non-fatal deviations from the recommended recipe.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if !RECOMMENDED_BATCH.contains(&self.batch_size) {
            w.push(format!(
                "batch_size {} is outside the recommended {}..={}",
                self.batch_size,
                RECOMMENDED_BATCH.start(),
                RECOMMENDED_BATCH.end()
            ));
        }
        w
    }
}

/// Input dropout for `epoch`, interpolated linearly from `dropout_start` at
/// epoch 0 to `dropout_end` at the last epoch.
pub fn dropout_rate_at(epoch: usize, total_epochs: usize, config: &TrainConfig) -> Result<f64> {
    if epoch >= total_epochs {
        return Err(Error::Param(format!("epoch {epoch} outside 0..{total_epochs}")));
    }
    if total_epochs == 1 {
        return Ok(config.dropout_start);
    }
    let f = epoch as f64 / (total_epochs - 1) as f64;
    // convex combination so both endpoints come out exactly
    Ok(config.dropout_start * (1.0 - f) + config.dropout_end * f)
}
