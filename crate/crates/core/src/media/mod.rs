//! Ground-truth participating media: fields, scenes, grids and edits.

pub mod field;
pub mod grid_io;
pub mod ops;
pub mod scene;
pub mod scene_io;
pub mod transform;

pub use field::{Aabb, FieldKind, GridField, MediumField, MediumSample, ProceduralField, Shape};
pub use ops::{apply_edit, compose, extract_grids, Edit, PropertySource};
pub use scene::{Instance, Ray, SceneDescription, TrackingSegment};
pub use scene_io::{load_scene, save_scene, scene_hash, SceneFile};
pub use transform::Transform;
