//! Relightable neural participating media.
//!
//! A learned volume (density, albedo, phase asymmetry) plus learned fields
//! for multiply-scattered radiance and visibility, rendered by a ray marcher
//! and checked against a volumetric path tracer.

pub mod autodiff;
pub mod camera;
pub mod cli;
pub mod error;
pub mod evalkit;
pub mod fields;
pub mod image;
pub mod light;
pub mod mathkit;
pub mod media;
pub mod oracle;
pub mod presets;
pub mod renderer;
pub mod trainer;

pub use error::{Error, Result};
