//! Training loop, optimizers, frozen-feature caching and model selection.

mod checkpoint;
mod features;
mod fit;
mod loss;
mod optim;

pub use checkpoint::{select_best, Checkpoint, CheckpointMeta};
pub use features::{FeatureBank, FeatureKey, ImageRole};
pub use fit::{fit_standardizer, predict_pair_cached, train, validation_metric, EpochRecord, Retention, TrainConfig, TrainRun};
pub use loss::{loss_for_pair, pair_loss};
pub use optim::{optimizer_step, OptimizerConfig, OptimizerKind, OptimizerState};
