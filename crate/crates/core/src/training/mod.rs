mod adam;
mod config;
mod data;
mod loss;
mod model;
mod trainer;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use config::TrainConfig;
pub use data::{IterationBatch, TrainingData};
pub use loss::{branch_losses, total_loss};
pub use model::{params_hash, CheckpointMeta, PriorModel};
pub use trainer::{train_prior, IterationRecord, TrainOutput, Trainer};
