//! Runs the neural marcher on ground truth instead of networks: exact
//! properties and transmittance, and path-traced incident radiance projected
//! onto SH probes. The result is compared with the path tracer.
//!
//! `cargo run --release --example frozen_oracle -- [probe_res] [reference_spp]`

use neumedia::camera::Camera;
use neumedia::evalkit::{psnr, relative_rms};
use neumedia::image::Layer;
use neumedia::light::LightCondition;
use neumedia::mathkit::Vec3;
use neumedia::oracle::{render_reference, PathTracerConfig, ProbeGrid, ProbeGridConfig};
use neumedia::presets::sphere_scene;
use neumedia::renderer::{render_image, FrozenOracle, Illumination, MarchConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let res = args.next().and_then(|s| s.parse().ok()).unwrap_or(9);
    let spp = args.next().and_then(|s| s.parse().ok()).unwrap_or(512);

    let scene = sphere_scene(2.0, 0.8, 0.0)?;
    let camera = Camera::look_at(Vec3::new(0.0, -4.0, 1.0), Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0), 40.0, 48, 48)?;
    let light = LightCondition::point(Vec3::new(3.0, -2.0, 2.0), 300.0);

    let probes = ProbeGrid::build(
        &scene,
        &light,
        &ProbeGridConfig {
            res,
            l_max: 5,
            n_dirs: 128,
            spp_per_dir: 8,
        },
        &PathTracerConfig::default(),
    )?;
    let model = FrozenOracle {
        scene: &scene,
        probes: Some(&probes),
        transmittance_steps: 64,
    };
    let img = render_image(&model, &camera, &Illumination::new(light), &MarchConfig::default())?;
    let gt = render_reference(&scene, &camera, &light, &PathTracerConfig { spp, seed: 1, ..Default::default() })?;

    println!("psnr {:.2} dB", psnr(&img, &gt)?);
    println!("relative error total {:.4}", relative_rms(&img, &gt)?);
    for l in [Layer::Direct, Layer::Indirect] {
        println!("relative error {l:?} {:.4}", relative_rms(&img.layer(l).unwrap(), &gt.layer(l).unwrap())?);
    }
    Ok(())
}
