//! Trains the networks on a dataset written by the `gen_dataset` example.
//!
//! `cargo run --release --example train_sphere -- [data_dir] [run_dir] [iters]`
//!
//! The run directory receives `model.nmckpt`, its JSON sidecar and
//! `metrics.tsv`. Re-running with the same directory resumes.

use std::path::PathBuf;

use neumedia::evalkit::{load_manifest, training_set, Split, SCENE_FILE};
use neumedia::media::load_scene;
use neumedia::presets::preset;
use neumedia::trainer::{train, RunDir};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NM_LOG", "info")).init();
    let mut args = std::env::args().skip(1);
    let data = PathBuf::from(args.next().unwrap_or_else(|| "out/dataset".into()));
    let run = PathBuf::from(args.next().unwrap_or_else(|| "out/run".into()));
    let iters = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);

    let p = preset("sphere-desk")?;
    let manifest = load_manifest(&data)?;
    let scene = load_scene(&data.join(SCENE_FILE))?.scene;
    let set = training_set(&data, &manifest, &scene, Split::Train)?;
    let mut cfg = p.train.clone();
    cfg.total_iters = iters;
    let out = train(
        &set,
        p.network.clone(),
        &cfg,
        &RunDir {
            dir: Some(run.clone()),
            resume: true,
            stop_after: None,
        },
    )?;
    if let (Some(a), Some(b)) = (out.metrics.first(), out.metrics.last()) {
        println!(
            "render loss {:.4} -> {:.4}, visibility loss {:.4} -> {:.4}",
            a.render_loss, b.render_loss, a.visibility_loss, b.visibility_loss
        );
    }
    let c = out.net.query_properties(&[neumedia::mathkit::Vec3::ZERO])?[0];
    println!("center: sigma {:.3} albedo {:.3} g {:+.3}", c.sigma, c.albedo.y, c.g);
    println!("checkpoint in {}", run.display());
    Ok(())
}
