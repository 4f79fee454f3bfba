//! Grid extraction, property edits and scene composition.
//!
//! A procedural sphere is rasterized, its density halved and its red albedo
//! removed, then placed next to the original in one scene and path-traced.
//!
//! `cargo run --release --example edit_compose -- [out_dir]`

use std::path::PathBuf;

use neumedia::camera::Camera;
use neumedia::image::write_image_set;
use neumedia::light::LightCondition;
use neumedia::mathkit::Vec3;
use neumedia::media::{apply_edit, compose, extract_grids, save_scene, Edit, SceneDescription, Transform};
use neumedia::oracle::{render_reference, PathTracerConfig};
use neumedia::presets::sphere_scene;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/edit".into()));
    std::fs::create_dir_all(&out)?;

    let original = sphere_scene(2.0, 0.8, 0.0)?;
    let grid = extract_grids(&original, [32; 3], 1 << 24)?;
    let edited = apply_edit(&apply_edit(&grid, Edit::DensityScale(0.5))?, Edit::albedo("r", 0.0)?)?;
    let edited = SceneDescription::single(edited)?;

    let light = LightCondition::point(Vec3::new(0.0, -3.0, 4.0), 600.0);
    let both = compose(&[
        (original.with_light("key", light), Transform::translate(Vec3::new(-1.2, 0.0, 0.0))),
        (edited, Transform::translate(Vec3::new(1.2, 0.0, 0.0))),
    ])?;
    let camera = Camera::look_at(Vec3::new(0.0, -6.0, 1.5), Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), 45.0, 96, 48)?;
    save_scene(&out.join("composed.json"), &both, Some(&camera))?;

    let img = render_reference(&both, &camera, &light, &PathTracerConfig { spp: 32, ..Default::default() })?;
    for f in write_image_set(&out.join("composed.pfm"), &img, true)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}
