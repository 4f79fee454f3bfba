//! End-to-end optimization of the network set against posed images.
//!
//! The objective is the tone-mapped image error plus `mu` times the squared
//! error between the visibility network and transmittance marched through
//! the learned density. The marched target is a constant, and the render
//! term sees visibility only as a constant, so each term updates a disjoint
//! set of networks.

mod batch;
mod config;
mod train;

pub use batch::{
    compute_loss, evaluate, prepare_batch, prepare_records, render_loss, visibility_loss, visibility_target, Evaluation, PreparedBatch,
    RayRecord, Terms, TrainingSet, TrainingView,
};
pub use config::TrainConfig;
pub use train::{train, train_step, RunDir, StepMetrics, TrainOutcome, CHECKPOINT_FILE, LOCK_FILE, METRICS_FILE};

#[cfg(test)]
mod tests;
