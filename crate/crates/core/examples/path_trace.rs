//! Path-traces a homogeneous sphere lit by a point light and writes the
//! image with its direct and indirect layers.
//!
//! `cargo run --release --example path_trace -- [out_dir] [spp]`

use std::path::PathBuf;

use neumedia::camera::Camera;
use neumedia::image::{write_image_set, Layer};
use neumedia::light::LightCondition;
use neumedia::mathkit::Vec3;
use neumedia::oracle::{render_reference, PathTracerConfig};
use neumedia::presets::sphere_scene;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/path_trace".into()));
    let spp = args.next().and_then(|s| s.parse().ok()).unwrap_or(64);

    let scene = sphere_scene(2.0, 0.8, 0.0)?;
    let camera = Camera::look_at(Vec3::new(0.0, -4.0, 1.0), Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), 40.0, 64, 64)?;
    let light = LightCondition::point(Vec3::new(3.0, -2.0, 2.0), 300.0);
    let img = render_reference(&scene, &camera, &light, &PathTracerConfig { spp, ..Default::default() })?;

    std::fs::create_dir_all(&out)?;
    for f in write_image_set(&out.join("sphere.pfm"), &img, true)? {
        println!("wrote {}", f.display());
    }
    let (d, i) = (img.layer(Layer::Direct).unwrap().mean(), img.layer(Layer::Indirect).unwrap().mean());
    println!("mean direct {:.4} indirect {:.4}", d.luminance(), i.luminance());
    Ok(())
}
