//! SGD with momentum, the dropout schedule, and the training loops for
//! encoders and classifiers.

mod config;
mod optim;
mod pretrain;
mod trainer;

pub use config::{dropout_rate_at, LossReduction, TrainConfig, RECOMMENDED_BATCH};
pub use optim::{sgd_momentum_step, OptimizerState};
pub use pretrain::pretrain_layerwise;
pub use trainer::{
    finetune, finetune_checkpoint, finetune_with, train_classifier, train_classifier_with, train_te, train_te_with,
    EpochStats, TrainReport,
};
