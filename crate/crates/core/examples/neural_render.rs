//! Renders a trained checkpoint for the test views of its dataset and
//! splits each image into single- and multiple-scattering layers.
//!
//! `cargo run --release --example neural_render -- [data_dir] [checkpoint] [out_dir]`

use std::path::PathBuf;

use neumedia::evalkit::{load_manifest, load_views, relative_rms, Split, SCENE_FILE};
use neumedia::fields::load_network;
use neumedia::image::{write_image_set, Layer};
use neumedia::media::load_scene;
use neumedia::renderer::{render_image, Illumination, MarchConfig, NeuralModel, VisibilitySource};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let data = PathBuf::from(args.next().unwrap_or_else(|| "out/dataset".into()));
    let ckpt = PathBuf::from(args.next().unwrap_or_else(|| "out/run/model.nmckpt".into()));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/render".into()));

    let (net, _) = load_network(&ckpt)?;
    let model = NeuralModel::new(&net);
    let manifest = load_manifest(&data)?;
    let scene = load_scene(&data.join(SCENE_FILE))?.scene;
    std::fs::create_dir_all(&out)?;
    for (index, v) in load_views(&data, &manifest, Split::Test)?.into_iter().enumerate() {
        let illum = Illumination::from_scene(&scene, v.light);
        for source in [VisibilitySource::Learned, VisibilitySource::Oracle] {
            let cfg = MarchConfig {
                visibility_source: source,
                ..Default::default()
            };
            let img = render_image(&model, &v.camera, &illum, &cfg)?;
            let tag = format!("{:?}", source).to_lowercase();
            write_image_set(&out.join(format!("{}_{tag}.pfm", index)), &img, true)?;
            let direct = relative_rms(&img.layer(Layer::Direct).unwrap(), &v.image.layer(Layer::Direct).unwrap())?;
            let total = relative_rms(&img, &v.image)?;
            println!("view {} ({tag} visibility): total rel. error {total:.3}, direct {direct:.3}", index);
        }
    }
    Ok(())
}
