//! Renders a small relit dataset of the desk sphere.
//!
//! `cargo run --release --example gen_dataset -- [out_dir] [spp]`

use std::path::PathBuf;

use neumedia::evalkit::{generate_dataset, Split};
use neumedia::presets::preset;

fn main() -> neumedia::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/dataset".into()));
    let p = preset("sphere-desk")?;
    let mut cfg = p.dataset.clone();
    cfg.spp = args.next().and_then(|s| s.parse().ok()).unwrap_or(64);
    cfg.train = 6;
    cfg.val = 1;
    cfg.test = 2;
    let m = generate_dataset(&p.scene, &cfg, &out)?;
    for split in [Split::Train, Split::Val, Split::Test] {
        println!("{split}: {} images", m.split(split).count());
    }
    for r in m.records.iter().take(3) {
        println!("  {} light at {:?}, intensity {:.0}", r.path.display(), r.light.position, r.light.intensity);
    }
    println!("scene hash {}", m.scene_hash);
    Ok(())
}
