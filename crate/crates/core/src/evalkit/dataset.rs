//! Posed, relit image sets rendered by the path tracer.
//!
//! Layout under the output directory: `scene.json`, `manifest.json` and
//! `images/{split}/{index}.pfm` with a PNG preview (and `_direct` /
//! `_indirect` layers) next to each image.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{domain_err, Error, Result};
use crate::image::{read_pfm, write_image_set, HdrImage};
use crate::light::LightCondition;
use crate::mathkit::rng::mix64;
use crate::mathkit::{RngStream, Vec3};
use crate::media::{save_scene, scene_hash, SceneDescription};
use crate::oracle::{render_reference, PathTracerConfig};
use crate::trainer::{TrainingSet, TrainingView};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCENE_FILE: &str = "scene.json";
pub const SCHEMA_VERSION: u32 = 1;

const DOMAIN_CAMERAS: u64 = 0x4341_4d53;
const DOMAIN_LIGHTS: u64 = 0x4c49_4748;
const DOMAIN_IMAGES: u64 = 0x494d_4753;

/// Lighting protocol of a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightMode {
    /// A single white point light per image.
    Point,
    /// The fixed environment switched on or off per image, plus a point light.
    EnvPoint,
}

impl FromStr for LightMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point" => Ok(Self::Point),
            "env+point" | "env_point" => Ok(Self::EnvPoint),
            _ => Err(Error::Usage(format!("unknown light mode '{s}' (point, env+point)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown split '{s}' (train, val, test)")))
    }
}

/// Ranges of the light protocol.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LightProtocol {
    pub intensity: [f64; 2],
    /// Light distance from the scene center for train and val images.
    pub distance: [f64; 2],
    /// Fixed light distance of test images.
    pub test_distance: f64,
}

impl Default for LightProtocol {
    fn default() -> Self {
        Self {
            intensity: [50.0, 900.0],
            distance: [3.0, 5.0],
            test_distance: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub mode: LightMode,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub width: usize,
    pub height: usize,
    pub fov_y_deg: f64,
    pub camera_radius: f64,
    /// Camera elevation range in degrees above the horizontal plane.
    pub elevation_deg: [f64; 2],
    pub lights: LightProtocol,
    pub spp: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            mode: LightMode::Point,
            train: 170,
            val: 10,
            test: 30,
            width: 64,
            height: 64,
            fov_y_deg: 40.0,
            camera_radius: 4.0,
            elevation_deg: [5.0, 80.0],
            lights: LightProtocol::default(),
            spp: 256,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train + self.val + self.test == 0 {
            return Err(domain_err!("dataset needs at least one image"));
        }
        if self.width == 0 || self.height == 0 || self.spp == 0 {
            return Err(domain_err!("resolution and spp must be >= 1"));
        }
        let [e0, e1] = self.elevation_deg;
        if !(-90.0..=90.0).contains(&e0) || !(e0..=90.0).contains(&e1) {
            return Err(domain_err!("elevation range {e0}..{e1} invalid"));
        }
        let l = &self.lights;
        if !(l.intensity[0] >= 0.0 && l.intensity[1] >= l.intensity[0]) {
            return Err(domain_err!("intensity range {:?} invalid", l.intensity));
        }
        if !(l.distance[0] > 0.0 && l.distance[1] >= l.distance[0] && l.test_distance > 0.0) {
            return Err(domain_err!("light distances invalid"));
        }
        if !(self.camera_radius > 0.0) {
            return Err(domain_err!("camera radius must be positive"));
        }
        Ok(())
    }

    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

/// One image of the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRecord {
    /// Relative to the dataset directory.
    pub path: PathBuf,
    pub split: Split,
    pub index: usize,
    pub camera: Camera,
    pub light: LightCondition,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub scene_hash: String,
    pub config: DatasetConfig,
    pub records: Vec<ImageRecord>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ImageRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Checks the schema, unique paths and that every image parses with the
    /// recorded resolution.
    pub fn validate(&self, dir: &Path) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Data(format!("manifest schema {} unsupported", self.schema_version)));
        }
        let mut seen = std::collections::BTreeSet::new();
        for r in &self.records {
            if !seen.insert(&r.path) {
                return Err(Error::Data(format!("{} listed more than once", r.path.display())));
            }
            r.camera.validate().map_err(|e| Error::Data(format!("{}: {e}", r.path.display())))?;
            r.light.validate().map_err(|e| Error::Data(format!("{}: {e}", r.path.display())))?;
            let img = read_pfm(&dir.join(&r.path))?;
            if (img.width, img.height) != (r.camera.width, r.camera.height) {
                return Err(Error::Data(format!("{}: resolution differs from its camera", r.path.display())));
            }
        }
        Ok(())
    }
}

/// Cameras on the upper view sphere, looking at `center`. Azimuths are
/// stratified over the split; elevations are stratified independently and
/// shuffled (a Latin hypercube in azimuth and elevation).
pub fn view_sphere_cameras(n: usize, center: Vec3, cfg: &DatasetConfig, rng: &mut RngStream) -> Result<Vec<Camera>> {
    let mut strata: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        strata.swap(i, rng.below(i + 1));
    }
    let [e0, e1] = cfg.elevation_deg.map(f64::to_radians);
    let (s0, s1) = (e0.sin(), e1.sin());
    (0..n)
        .map(|i| {
            let phi = 2.0 * PI * (i as f64 + rng.uniform()) / n as f64;
            // uniform in area over the elevation band
            let s = s0 + (s1 - s0) * (strata[i] as f64 + rng.uniform()) / n as f64;
            let c = (1.0 - s * s).max(0.0).sqrt();
            let eye = center + Vec3::new(c * phi.cos(), c * phi.sin(), s) * cfg.camera_radius;
            Camera::look_at(eye, center, Vec3::new(0.0, 0.0, 1.0), cfg.fov_y_deg, cfg.width, cfg.height)
        })
        .collect()
}

/// Light of one image: direction uniform on the sphere around `center`,
/// distance per split, intensity uniform in the protocol range.
pub fn sample_light(split: Split, center: Vec3, cfg: &DatasetConfig, rng: &mut RngStream) -> LightCondition {
    let p = &cfg.lights;
    let dir = crate::mathkit::sampling::uniform_sphere(rng.uniform(), rng.uniform());
    let dist = match split {
        Split::Test => p.test_distance,
        _ => p.distance[0] + (p.distance[1] - p.distance[0]) * rng.uniform(),
    };
    let intensity = p.intensity[0] + (p.intensity[1] - p.intensity[0]) * rng.uniform();
    let env = match cfg.mode {
        LightMode::Point => false,
        LightMode::EnvPoint => rng.uniform() < 0.5,
    };
    LightCondition {
        position: center + dir.vec() * dist,
        intensity,
        env,
    }
}

/// Cameras and lights of every image, without rendering.
pub fn plan_dataset(scene: &SceneDescription, cfg: &DatasetConfig) -> Result<Vec<ImageRecord>> {
    cfg.validate()?;
    let center = scene.bounds().center();
    let mut out = Vec::new();
    for (k, split) in Split::ALL.into_iter().enumerate() {
        let n = cfg.count(split);
        let cams = view_sphere_cameras(n, center, cfg, &mut RngStream::split(cfg.seed, DOMAIN_CAMERAS, k as u64))?;
        let mut lrng = RngStream::split(cfg.seed, DOMAIN_LIGHTS, k as u64);
        for (index, camera) in cams.into_iter().enumerate() {
            out.push(ImageRecord {
                path: PathBuf::from(format!("images/{split}/{index}.pfm")),
                split,
                index,
                camera,
                light: sample_light(split, center, cfg, &mut lrng),
            });
        }
    }
    Ok(out)
}

/// Renders every planned image with the path tracer and writes the dataset.
/// On failure the partially written dataset is removed.
pub fn generate_dataset(scene: &SceneDescription, cfg: &DatasetConfig, out: &Path) -> Result<DatasetManifest> {
    let records = plan_dataset(scene, cfg)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let res = write_dataset(scene, cfg, records, out);
    if res.is_err() {
        let _ = fs::remove_dir_all(out.join("images"));
        let _ = fs::remove_file(out.join(MANIFEST_FILE));
        let _ = fs::remove_file(out.join(SCENE_FILE));
    }
    res
}

fn write_dataset(scene: &SceneDescription, cfg: &DatasetConfig, records: Vec<ImageRecord>, out: &Path) -> Result<DatasetManifest> {
    save_scene(&out.join(SCENE_FILE), scene, None)?;
    for split in Split::ALL {
        let d = out.join("images").join(split.name());
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    for (i, r) in records.iter().enumerate() {
        let pt = PathTracerConfig {
            spp: cfg.spp,
            seed: mix64(cfg.seed ^ mix64(DOMAIN_IMAGES.wrapping_add(i as u64))),
            ..Default::default()
        };
        let img = render_reference(scene, &r.camera, &r.light, &pt)?;
        write_image_set(&out.join(&r.path), &img, true)?;
        info!("rendered {} ({}/{})", r.path.display(), i + 1, records.len());
    }
    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        scene_hash: scene_hash(scene),
        config: cfg.clone(),
        records,
    };
    let p = out.join(MANIFEST_FILE);
    fs::write(&p, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&p, e))?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let p = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", p.display())))
}

/// Images of one split with their cameras and lights, in index order.
pub fn load_views(dir: &Path, manifest: &DatasetManifest, split: Split) -> Result<Vec<TrainingView>> {
    let mut recs: Vec<&ImageRecord> = manifest.split(split).collect();
    recs.sort_by_key(|r| r.index);
    recs.into_iter()
        .map(|r| {
            let image: HdrImage = read_pfm(&dir.join(&r.path))?;
            let layer = |suffix: &str| -> Result<Option<Vec<f32>>> {
                let stem = r.path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
                let p = dir.join(r.path.with_file_name(format!("{stem}{suffix}.pfm")));
                if p.exists() {
                    Ok(Some(read_pfm(&p)?.rgb))
                } else {
                    Ok(None)
                }
            };
            let image = HdrImage {
                direct: layer("_direct")?,
                indirect: layer("_indirect")?,
                ..image
            };
            Ok(TrainingView {
                camera: r.camera,
                light: r.light,
                image,
            })
        })
        .collect()
}

/// Training rays of a split, lit by the scene's environment.
pub fn training_set(dir: &Path, manifest: &DatasetManifest, scene: &SceneDescription, split: Split) -> Result<TrainingSet> {
    let views = load_views(dir, manifest, split)?;
    TrainingSet::from_views(&views, scene.env.clone(), scene.background)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::MediumField;

    fn sphere() -> SceneDescription {
        SceneDescription::single(MediumField::homogeneous_sphere(1.0, 2.0, Vec3::splat(0.8), 0.0).unwrap()).unwrap()
    }

    #[test]
    fn full_protocol_counts_and_ranges() {
        let cfg = DatasetConfig::default();
        let recs = plan_dataset(&sphere(), &cfg).unwrap();
        assert_eq!(recs.len(), 210);
        for r in &recs {
            let d = r.light.position.length();
            let i = r.light.intensity;
            assert!((50.0..=900.0).contains(&i));
            match r.split {
                Split::Test => assert!((d - 4.0).abs() < 1e-12, "{d}"),
                _ => assert!((3.0..=5.0).contains(&d), "{d}"),
            }
            assert!(!r.light.env);
            let eye = r.camera.eye();
            assert!((eye.length() - 4.0).abs() < 1e-9);
            assert!(eye.z > 0.0);
        }
        let paths: std::collections::BTreeSet<_> = recs.iter().map(|r| &r.path).collect();
        assert_eq!(paths.len(), recs.len());
    }

    #[test]
    fn env_mode_mixes_indicators() {
        let cfg = DatasetConfig {
            mode: LightMode::EnvPoint,
            ..Default::default()
        };
        let recs = plan_dataset(&sphere(), &cfg).unwrap();
        let on = recs.iter().filter(|r| r.light.env).count();
        assert!(on > 50 && on < 160, "{on}");
    }

    #[test]
    fn azimuths_are_stratified() {
        let cfg = DatasetConfig::default();
        let cams = view_sphere_cameras(20, Vec3::ZERO, &cfg, &mut RngStream::new(1, 0)).unwrap();
        for (i, c) in cams.iter().enumerate() {
            let e = c.eye();
            let phi = e.y.atan2(e.x).rem_euclid(2.0 * PI);
            let k = (phi / (2.0 * PI) * 20.0).floor() as usize;
            assert_eq!(k, i);
        }
    }

    #[test]
    fn generate_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DatasetConfig {
            train: 2,
            val: 1,
            test: 1,
            width: 6,
            height: 5,
            spp: 2,
            seed: 3,
            ..Default::default()
        };
        let m = generate_dataset(&sphere(), &cfg, dir.path()).unwrap();
        assert_eq!(m.records.len(), 4);
        let again = load_manifest(dir.path()).unwrap();
        assert_eq!(again, m);
        again.validate(dir.path()).unwrap();
        assert!(dir.path().join("images/test/0.pfm").exists());
        assert!(dir.path().join("images/train/1_direct.pfm").exists());
        assert!(dir.path().join(SCENE_FILE).exists());
        let set = training_set(dir.path(), &m, &sphere(), Split::Train).unwrap();
        assert_eq!(set.records.len(), 2 * 30);
        let views = load_views(dir.path(), &m, Split::Val).unwrap();
        assert!(views[0].image.direct.is_some());

        let other = tempfile::tempdir().unwrap();
        let m2 = generate_dataset(&sphere(), &cfg, other.path()).unwrap();
        assert_eq!(m2, m);
        for r in &m.records {
            assert_eq!(fs::read(dir.path().join(&r.path)).unwrap(), fs::read(other.path().join(&r.path)).unwrap());
        }
    }

    #[test]
    fn missing_image_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DatasetConfig {
            train: 1,
            val: 0,
            test: 0,
            width: 4,
            height: 4,
            spp: 1,
            ..Default::default()
        };
        let m = generate_dataset(&sphere(), &cfg, dir.path()).unwrap();
        fs::remove_file(dir.path().join(&m.records[0].path)).unwrap();
        assert!(m.validate(dir.path()).is_err());
    }
}
