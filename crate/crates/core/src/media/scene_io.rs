//! JSON scene files.
//!
//! ```json
//! {
//!   "instances": [
//!     { "field": { "kind": "homogeneous", "sigma": 2.0, "albedo": [0.8, 0.8, 0.8],
//!                  "g": 0.0, "shape": { "sphere": { "radius": 1.0 } } },
//!       "transform": { "translation": [0, 0, 0] } },
//!     { "field": { "kind": "grid", "path": "cloud.nmgrid",
//!                  "bounds": { "min": [-1, -1, -1], "max": [1, 1, 1] } } }
//!   ],
//!   "background": [0, 0, 0],
//!   "lights": { "key": { "position": [0, 4, 0], "intensity": 400.0 } },
//!   "environment": [[1.0, 1.1, 1.3], [0, 0, 0], [0.4, 0.45, 0.55], [0, 0, 0]],
//!   "camera": { "camera_to_world": [[1,0,0,0],[0,1,0,0],[0,0,1,4]],
//!               "fov_y_deg": 40, "width": 64, "height": 64 }
//! }
//! ```
//!
//! Field kinds are `homogeneous` (shape `box` or `sphere`, optional
//! `bounds` for boxes), `procedural` and `grid`. Grid paths are relative to
//! the scene file. `environment`, `lights`, `camera`, `background` and
//! `transform` may be omitted.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::camera::Camera;
use crate::error::{domain_err, Error, Result};
use crate::light::{EnvLight, LightCondition};
use crate::mathkit::Vec3;

use super::field::{Aabb, FieldKind, MediumField, ProceduralField, Shape};
use super::grid_io::{encode_grid, read_grid, write_grid};
use super::scene::{Instance, SceneDescription};
use super::transform::Transform;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum FieldDoc {
    Homogeneous {
        sigma: f64,
        albedo: Vec3,
        #[serde(default)]
        g: f64,
        shape: Shape,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bounds: Option<Aabb>,
    },
    Procedural(ProceduralField),
    Grid {
        path: PathBuf,
        bounds: Aabb,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    field: FieldDoc,
    #[serde(default)]
    transform: Transform,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    instances: Vec<InstanceDoc>,
    #[serde(default)]
    background: Vec3,
    #[serde(default)]
    lights: BTreeMap<String, LightCondition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    environment: Option<[[f64; 3]; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    camera: Option<Camera>,
}

/// A scene together with the optional camera stored in its file.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneFile {
    pub scene: SceneDescription,
    pub camera: Option<Camera>,
}

fn field_from_doc(doc: FieldDoc, base: &Path) -> Result<MediumField> {
    match doc {
        FieldDoc::Homogeneous {
            sigma,
            albedo,
            g,
            shape,
            bounds,
        } => match shape {
            Shape::Sphere { radius } => {
                if !(radius > 0.0) {
                    return Err(domain_err!("sphere radius {radius} must be positive"));
                }
                MediumField::homogeneous_sphere(radius, sigma, albedo, g)
            }
            Shape::Box => MediumField::homogeneous_box(bounds.unwrap_or(Aabb::cube(1.0)), sigma, albedo, g),
        },
        FieldDoc::Procedural(p) => MediumField::procedural(p),
        FieldDoc::Grid { path, bounds } => {
            let full = if path.is_absolute() { path } else { base.join(path) };
            MediumField::grid(read_grid(&full)?, bounds)
        }
    }
}

/// Parses scene JSON; grid paths resolve against `base`.
pub fn parse_scene(text: &str, base: &Path) -> Result<SceneFile> {
    let doc: SceneDoc = serde_json::from_str(text)?;
    let mut instances = Vec::with_capacity(doc.instances.len());
    for inst in doc.instances {
        instances.push(Instance::new(field_from_doc(inst.field, base)?, inst.transform));
    }
    let mut scene = SceneDescription::new(instances)?;
    scene.background = doc.background;
    if !(doc.background.is_finite() && doc.background.min_elem(Vec3::ZERO) == Vec3::ZERO) {
        return Err(domain_err!("background must be finite and non-negative"));
    }
    scene.lights = doc.lights;
    if let Some(env) = doc.environment {
        scene.env = EnvLight::from_coeffs(env);
    }
    scene.validate()?;
    if let Some(cam) = &doc.camera {
        cam.validate()?;
    }
    Ok(SceneFile {
        scene,
        camera: doc.camera,
    })
}

pub fn load_scene(path: &Path) -> Result<SceneFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_scene(&text, base)
}

fn to_doc(scene: &SceneDescription, camera: Option<&Camera>, grid_name: &mut dyn FnMut(usize, &MediumField) -> Result<PathBuf>) -> Result<SceneDoc> {
    let mut instances = Vec::new();
    for (i, inst) in scene.instances.iter().enumerate() {
        let f = &*inst.field;
        let field = match &f.kind {
            FieldKind::Homogeneous {
                sigma,
                albedo,
                g,
                shape,
            } => FieldDoc::Homogeneous {
                sigma: *sigma,
                albedo: *albedo,
                g: *g,
                shape: *shape,
                bounds: matches!(shape, Shape::Box).then_some(f.bounds),
            },
            FieldKind::Procedural(p) => FieldDoc::Procedural(*p),
            FieldKind::Grid(_) => FieldDoc::Grid {
                path: grid_name(i, f)?,
                bounds: f.bounds,
            },
        };
        instances.push(InstanceDoc {
            field,
            transform: inst.transform,
        });
    }
    let env = scene.env.coeffs();
    Ok(SceneDoc {
        instances,
        background: scene.background,
        lights: scene.lights.clone(),
        environment: (env != crate::light::DEFAULT_ENV_COEFFS).then_some(env),
        camera: camera.copied(),
    })
}

/// Writes the scene JSON; grid payloads go next to it as
/// `<stem>.<instance>.nmgrid`.
pub fn save_scene(path: &Path, scene: &SceneDescription, camera: Option<&Camera>) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("scene")
        .to_string();
    let doc = to_doc(scene, camera, &mut |i, f| {
        let FieldKind::Grid(g) = &f.kind else { unreachable!() };
        let name = PathBuf::from(format!("{stem}.{i}.nmgrid"));
        write_grid(&dir.join(&name), g)?;
        Ok(name)
    })?;
    let text = serde_json::to_string_pretty(&doc)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// SHA-256 over the scene content (grid payloads hashed by value).
pub fn scene_hash(scene: &SceneDescription) -> String {
    let doc = to_doc(scene, None, &mut |_, f| {
        let FieldKind::Grid(g) = &f.kind else { unreachable!() };
        Ok(PathBuf::from(hex::encode(Sha256::digest(encode_grid(g)))))
    })
    .expect("in-memory serialization");
    hex::encode(Sha256::digest(serde_json::to_vec(&doc).expect("scene serializes")))
}
