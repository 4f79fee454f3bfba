//! Reverse-mode differentiation over batched dense blocks, MLPs, Adam and
//! checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod matrix;
pub mod mlp;
pub mod params;
pub mod real;
pub mod schedule;
pub mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use gradcheck::{grad_check, GradCheckReport, LossProbe};
pub use matrix::Matrix;
pub use mlp::{mlp_forward, Mlp, MlpSpec, OutputActivation};
pub use params::{ParamBlock, ParamId, ParamSet};
pub use real::Real;
pub use schedule::lr_at;
pub use tape::{NodeId, Tape};
