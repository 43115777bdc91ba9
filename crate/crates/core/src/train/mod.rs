//! Photometric loss, Adam, the shape regularizer and the training loop.

pub mod adam;
pub mod loss;
pub mod regularizer;
mod trainer;

pub use trainer::{
    scene_entropy_metric, scene_kappa_median, train, EpochLog, LearningRates, StepReport, TrainConfig, TrainError,
    TrainOutcome, TrainState, Trainer, TrainingView, Variant,
};
