//! Dataset generation with the path tracer, and image metrics.

mod dataset;
mod metrics;

pub use dataset::{
    generate_dataset, load_manifest, load_views, plan_dataset, sample_light, training_set, view_sphere_cameras, DatasetConfig,
    DatasetManifest, ImageRecord, LightMode, LightProtocol, Split, MANIFEST_FILE, SCENE_FILE, SCHEMA_VERSION,
};
pub use metrics::{psnr, relative_rms, ssim};
