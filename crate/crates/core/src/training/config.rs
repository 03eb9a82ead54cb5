use serde::{Deserialize, Serialize};

use super::adam::AdamHyper;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: u64,
    /// Hard cap on iterations, applied after the epoch count.
    pub max_iterations: Option<u64>,
    pub queries_per_iter: usize,
    pub lr_embeddings: f64,
    pub lr_decoders: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Iterations between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: u64,
    pub log_every: u64,
    /// Leading observations of each shape used for training.
    pub train_observations: usize,
    /// Draw fresh queries from the meshes every iteration instead of
    /// subsampling the stored batches.
    pub online_queries: bool,
    pub freeze_corruption: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            max_iterations: None,
            queries_per_iter: 16_384,
            lr_embeddings: 0.0005,
            lr_decoders: 0.001,
            lr_decay_factor: 0.5,
            lr_decay_every: 500,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            checkpoint_every: 0,
            log_every: 10,
            train_observations: 5,
            online_queries: false,
            freeze_corruption: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_embeddings > 0.0 && self.lr_decoders > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return Err(Error::invalid("lr_decay_factor must lie in (0, 1]"));
        }
        if self.lr_decay_every == 0 {
            return Err(Error::invalid("lr_decay_every must be positive"));
        }
        if self.queries_per_iter == 0 || !self.queries_per_iter.is_multiple_of(2) {
            return Err(Error::invalid("queries_per_iter must be positive and even"));
        }
        if self.train_observations == 0 {
            return Err(Error::invalid("train_observations must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.eps > 0.0)
        {
            return Err(Error::invalid(
                "Adam betas must lie in [0, 1) and eps be positive",
            ));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    /// Step decay: `base * factor^(epoch / every)`.
    pub fn lr_at(&self, base: f64, epoch: u64) -> f64 {
        base * self
            .lr_decay_factor
            .powi((epoch / self.lr_decay_every) as i32)
    }
}
