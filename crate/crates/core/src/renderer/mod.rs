//! Neural ray marcher: single scattering with shadow visibility, multiple
//! scattering from an SH radiance field, composited along camera rays.

mod march;
mod model;
pub mod shading;

pub use march::{
    march_batch, march_ray, multiple_scatter, render_image, shade_batch, shadow_segments, single_scatter, Illumination,
    MarchConfig, RaySamples, ShadedBatch,
};
pub use model::{FrozenOracle, NeuralModel, Segment, VisibilitySource, VolumeModel};
pub use shading::{RayRadiance, ShadingContext};
