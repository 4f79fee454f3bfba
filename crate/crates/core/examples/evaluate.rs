//! Scores rendered images against a dataset split with PSNR and SSIM.
//!
//! `cargo run --release --example evaluate -- [data_dir] [render_dir]`
//!
//! Without a render directory, the split is scored against a noisier
//! re-render of itself, which shows how path-tracing noise alone limits PSNR.

use std::path::PathBuf;

use neumedia::evalkit::{load_manifest, load_views, psnr, ssim, Split, SCENE_FILE};
use neumedia::image::read_pfm;
use neumedia::media::load_scene;
use neumedia::oracle::{render_reference, PathTracerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let data = PathBuf::from(args.next().unwrap_or_else(|| "out/dataset".into()));
    let renders = args.next().map(PathBuf::from);

    let manifest = load_manifest(&data)?;
    let scene = load_scene(&data.join(SCENE_FILE))?.scene;
    let (mut sp, mut ss, mut n) = (0.0, 0.0, 0.0);
    for (index, v) in load_views(&data, &manifest, Split::Test)?.into_iter().enumerate() {
        let pred = match &renders {
            Some(dir) => read_pfm(&dir.join(format!("{}.pfm", index)))?,
            None => render_reference(&scene, &v.camera, &v.light, &PathTracerConfig { spp: 16, seed: 5, ..Default::default() })?,
        };
        let (p, s) = (psnr(&pred, &v.image)?, ssim(&pred, &v.image)?);
        println!("test/{}: psnr {p:.2} dB, ssim {s:.4}", index);
        sp += p;
        ss += s;
        n += 1.0;
    }
    println!("mean psnr {:.2} dB, mean ssim {:.4}", sp / n, ss / n);
    Ok(())
}
