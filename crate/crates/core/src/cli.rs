//! The `nmedia` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical abort.
//! Every successful run prints one JSON summary line on stdout. Logging goes
//! to stderr and is controlled by `NM_LOG` (`error`, `info`, `debug`).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use log::info;
use serde_json::{json, Value};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::evalkit::{self, psnr, ssim, DatasetConfig, LightMode, Split};
use crate::fields::load_network;
use crate::image::{read_pfm, write_image_set, HdrImage};
use crate::light::LightCondition;
use crate::mathkit::Vec3;
use crate::media::{self, apply_edit, extract_grids, Edit, FieldKind, SceneDescription, Transform};
use crate::oracle::{render_reference, PathTracerConfig};
use crate::presets::{preset, PRESET_NAMES};
use crate::renderer::{render_image, Illumination, MarchConfig, NeuralModel, VisibilitySource};
use crate::trainer::{train, RunDir, CHECKPOINT_FILE};

#[derive(Debug, Parser)]
#[command(name = "nmedia", version, about = "Relightable neural participating media")]
pub struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Seed of every random choice.
    #[arg(long, global = true, default_value_t = 0, value_name = "U64")]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a posed, relit dataset with the path tracer.
    GenData(GenDataArgs),
    /// Path-trace one image of a scene.
    Trace(TraceArgs),
    /// Train the networks on a dataset.
    Train(TrainArgs),
    /// Render images from a trained checkpoint.
    Render(RenderArgs),
    /// PSNR and SSIM of rendered images against a dataset split.
    Eval(EvalArgs),
    /// Sample a checkpoint's density, albedo and asymmetry into a grid scene.
    Extract(ExtractArgs),
    /// Scale density or one albedo channel of a scene.
    Edit(EditArgs),
    /// Merge several scenes into one.
    Compose(ComposeArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Scene file (default: the preset's scene).
    #[arg(long, value_name = "PATH")]
    pub scene: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Preset supplying the scene and dataset protocol.
    #[arg(long, default_value = "sphere-desk", value_name = "NAME")]
    pub preset: String,
    /// Path samples per pixel.
    #[arg(long, value_name = "N")]
    pub spp: Option<usize>,
    /// Image width and height in pixels.
    #[arg(long, value_name = "N")]
    pub res: Option<usize>,
    /// Lighting protocol: point or env+point.
    #[arg(long, value_name = "MODE")]
    pub mode: Option<String>,
    /// Number of training images.
    #[arg(long, value_name = "N")]
    pub train: Option<usize>,
    /// Number of validation images.
    #[arg(long, value_name = "N")]
    pub val: Option<usize>,
    /// Number of test images.
    #[arg(long, value_name = "N")]
    pub test: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    /// Scene file; its camera and first light are used.
    #[arg(long, value_name = "PATH")]
    pub scene: PathBuf,
    /// Output directory (receives trace.pfm).
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Path samples per pixel.
    #[arg(long, default_value_t = 256, value_name = "N")]
    pub spp: usize,
    /// Override the image width and height.
    #[arg(long, value_name = "N")]
    pub res: Option<usize>,
    /// Also write _direct and _indirect layers.
    #[arg(long)]
    pub decompose: bool,
    /// Name of the scene light to use.
    #[arg(long, value_name = "NAME")]
    pub light: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by gen-data.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Run directory (checkpoint, metrics.tsv, train.json).
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Network and optimizer preset.
    #[arg(long, default_value = "sphere-desk", value_name = "NAME")]
    pub preset: String,
    /// Override the number of iterations.
    #[arg(long, value_name = "N")]
    pub iters: Option<u64>,
    /// Override the SH band of the indirect-radiance network (0..9).
    #[arg(long, value_name = "L")]
    pub lmax: Option<usize>,
    /// Continue from the checkpoint in --out.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Checkpoint written by train.
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// Scene file whose camera and first light are rendered.
    #[arg(long, value_name = "PATH", conflicts_with = "data")]
    pub scene: Option<PathBuf>,
    /// Dataset directory; every view of --split is rendered.
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Dataset split to render with --data.
    #[arg(long, default_value = "test", value_name = "SPLIT")]
    pub split: String,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Stratified samples per camera ray.
    #[arg(long, value_name = "N")]
    pub spp: Option<usize>,
    /// Override the image width and height.
    #[arg(long, value_name = "N")]
    pub res: Option<usize>,
    /// Also write _direct and _indirect layers.
    #[arg(long)]
    pub decompose: bool,
    /// Shadow visibility: learned network or marched learned density.
    #[arg(long, default_value = "learned", value_name = "learned|oracle")]
    pub visibility: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset directory holding the reference images.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Checkpoint to render and score.
    #[arg(long, value_name = "PATH", required_unless_present = "images", conflicts_with = "images")]
    pub checkpoint: Option<PathBuf>,
    /// Directory of already rendered images named {index}.pfm.
    #[arg(long, value_name = "DIR")]
    pub images: Option<PathBuf>,
    /// Dataset split to score.
    #[arg(long, default_value = "test", value_name = "SPLIT")]
    pub split: String,
    /// Where to write renders and eval.json.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Stratified samples per camera ray.
    #[arg(long, value_name = "N")]
    pub spp: Option<usize>,
    /// Shadow visibility: learned network or marched learned density.
    #[arg(long, default_value = "learned", value_name = "learned|oracle")]
    pub visibility: String,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Checkpoint written by train.
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// Output directory (receives extracted.json and its grid).
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Grid cells per axis.
    #[arg(long, default_value_t = 64, value_name = "N")]
    pub res: usize,
}

#[derive(Debug, Args)]
pub struct EditArgs {
    /// Scene to edit; non-grid fields are rasterized first.
    #[arg(long, value_name = "PATH")]
    pub scene: PathBuf,
    /// Output directory (receives edited.json and its grids).
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Multiply density by K.
    #[arg(long, value_name = "K")]
    pub density: Option<f64>,
    /// Multiply one albedo channel, e.g. r=0.5.
    #[arg(long, value_name = "CH=K")]
    pub albedo: Vec<String>,
    /// Rasterization cells per axis for non-grid fields.
    #[arg(long, default_value_t = 64, value_name = "N")]
    pub res: usize,
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    /// Scene files; lights and environment come from the first.
    #[arg(long, value_name = "PATH", required = true)]
    pub scene: Vec<PathBuf>,
    /// Translation x,y,z per scene, in order (default 0,0,0).
    #[arg(long, value_name = "X,Y,Z", allow_hyphen_values = true)]
    pub translate: Vec<String>,
    /// Output directory (receives composed.json).
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("nmedia: {e}");
            e.exit_code()
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("NM_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Runs a parsed command and returns its summary.
pub fn execute(cli: Cli) -> Result<Value> {
    let seed = cli.seed;
    let work = move || -> Result<Value> {
        match cli.command {
            Command::GenData(a) => gen_data(a, seed),
            Command::Trace(a) => trace(a, seed),
            Command::Train(a) => train_cmd(a, seed),
            Command::Render(a) => render_cmd(a, seed),
            Command::Eval(a) => eval_cmd(a, seed),
            Command::Extract(a) => extract_cmd(a),
            Command::Edit(a) => edit_cmd(a),
            Command::Compose(a) => compose_cmd(a),
        }
    };
    match cli.threads {
        Some(0) => Err(Error::Usage("--threads must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Resource(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n").map_err(|e| Error::io(path, e))
}

fn parse_split(s: &str) -> Result<Split> {
    s.parse()
}

fn parse_visibility(s: &str) -> Result<VisibilitySource> {
    s.parse()
}

/// JSON number, or the string "inf" for an infinite PSNR.
fn metric(v: f64) -> Value {
    if v.is_infinite() && v > 0.0 {
        json!("inf")
    } else {
        json!(v)
    }
}

fn load_scene_file(path: &Path) -> Result<media::SceneFile> {
    media::load_scene(path).map_err(|e| match e {
        Error::Domain(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn scene_light(scene: &SceneDescription, name: Option<&str>) -> Result<LightCondition> {
    match name {
        Some(n) => scene
            .lights
            .get(n)
            .copied()
            .ok_or_else(|| Error::Usage(format!("scene has no light named '{n}'"))),
        None => scene
            .lights
            .values()
            .next()
            .copied()
            .ok_or_else(|| Error::Data("scene defines no light".into())),
    }
}

/// The scene's own camera, or one on the view sphere looking at its center.
fn scene_camera(file: &media::SceneFile, res: Option<usize>) -> Result<Camera> {
    let cam = match file.camera {
        Some(c) => c,
        None => {
            let d = DatasetConfig::default();
            let c = file.scene.bounds().center();
            Camera::look_at(
                c + Vec3::new(0.0, -d.camera_radius * 0.9, d.camera_radius * 0.45),
                c,
                Vec3::new(0.0, 0.0, 1.0),
                d.fov_y_deg,
                d.width,
                d.height,
            )?
        }
    };
    Ok(match res {
        Some(n) => cam.with_resolution(n, n),
        None => cam,
    })
}

fn write_render(path: &Path, img: &HdrImage, decompose: bool) -> Result<Vec<PathBuf>> {
    let img = if decompose {
        img.clone()
    } else {
        HdrImage {
            direct: None,
            indirect: None,
            ..img.clone()
        }
    };
    write_image_set(path, &img, true)
}

fn gen_data(a: GenDataArgs, seed: u64) -> Result<Value> {
    let p = preset(&a.preset)?;
    let scene = match &a.scene {
        Some(s) => load_scene_file(s)?.scene,
        None => p.scene.clone(),
    };
    let mut cfg = p.dataset.clone();
    cfg.seed = seed;
    if let Some(n) = a.spp {
        cfg.spp = n;
    }
    if let Some(n) = a.res {
        cfg.width = n;
        cfg.height = n;
    }
    if let Some(m) = &a.mode {
        cfg.mode = m.parse::<LightMode>()?;
    }
    cfg.train = a.train.unwrap_or(cfg.train);
    cfg.val = a.val.unwrap_or(cfg.val);
    cfg.test = a.test.unwrap_or(cfg.test);
    let m = evalkit::generate_dataset(&scene, &cfg, &a.out)?;
    Ok(json!({
        "command": "gen-data",
        "out": a.out,
        "images": m.records.len(),
        "scene_hash": m.scene_hash,
    }))
}

fn trace(a: TraceArgs, seed: u64) -> Result<Value> {
    let file = load_scene_file(&a.scene)?;
    let camera = scene_camera(&file, a.res)?;
    let light = scene_light(&file.scene, a.light.as_deref())?;
    let cfg = PathTracerConfig {
        spp: a.spp,
        seed,
        ..Default::default()
    };
    let img = render_reference(&file.scene, &camera, &light, &cfg)?;
    mkdir(&a.out)?;
    let files = write_render(&a.out.join("trace.pfm"), &img, a.decompose)?;
    Ok(json!({ "command": "trace", "files": files, "mean": img.mean().to_array() }))
}

fn train_cmd(a: TrainArgs, seed: u64) -> Result<Value> {
    let p = preset(&a.preset)?;
    let manifest = evalkit::load_manifest(&a.data)?;
    manifest.validate(&a.data)?;
    let scene = load_scene_file(&a.data.join(evalkit::SCENE_FILE))?.scene;
    let set = evalkit::training_set(&a.data, &manifest, &scene, Split::Train)?;
    let mut net = p.network.clone();
    if let Some(l) = a.lmax {
        net.l_max = l;
        net.sh_enabled = true;
    }
    let mut cfg = p.train.clone();
    cfg.seed = seed;
    if let Some(n) = a.iters {
        cfg.total_iters = n;
    }
    mkdir(&a.out)?;
    write_json(
        &a.out.join("train.json"),
        &json!({ "preset": a.preset, "network": net, "train": cfg, "data": a.data }),
    )?;
    let run = RunDir {
        dir: Some(a.out.clone()),
        resume: a.resume,
        stop_after: None,
    };
    let out = train(&set, net, &cfg, &run)?;
    let last = out.metrics.last();
    Ok(json!({
        "command": "train",
        "checkpoint": a.out.join(CHECKPOINT_FILE),
        "iterations": out.final_iteration,
        "render_loss": last.map(|m| m.render_loss),
        "visibility_loss": last.map(|m| m.visibility_loss),
    }))
}

fn march_config(spp: Option<usize>, visibility: &str, seed: u64) -> Result<MarchConfig> {
    let mut cfg = MarchConfig {
        seed,
        visibility_source: parse_visibility(visibility)?,
        ..Default::default()
    };
    if let Some(n) = spp {
        cfg.n_samples = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn render_cmd(a: RenderArgs, seed: u64) -> Result<Value> {
    let cfg = march_config(a.spp, &a.visibility, seed)?;
    let split = parse_split(&a.split)?;
    let (net, _) = load_network(&a.checkpoint)?;
    let model = NeuralModel::new(&net);
    mkdir(&a.out)?;
    let mut files = Vec::new();
    match (&a.scene, &a.data) {
        (Some(s), None) => {
            let file = load_scene_file(s)?;
            let camera = scene_camera(&file, a.res)?;
            let light = scene_light(&file.scene, None)?;
            let img = render_image(&model, &camera, &Illumination::from_scene(&file.scene, light), &cfg)?;
            files.extend(write_render(&a.out.join("render.pfm"), &img, a.decompose)?);
        }
        (None, Some(d)) => {
            let manifest = evalkit::load_manifest(d)?;
            let scene = load_scene_file(&d.join(evalkit::SCENE_FILE))?.scene;
            for r in manifest.split(split) {
                let camera = match a.res {
                    Some(n) => r.camera.with_resolution(n, n),
                    None => r.camera,
                };
                let img = render_image(&model, &camera, &Illumination::from_scene(&scene, r.light), &cfg)?;
                files.extend(write_render(&a.out.join(format!("{}.pfm", r.index)), &img, a.decompose)?);
            }
        }
        _ => return Err(Error::Usage("render needs exactly one of --scene or --data".into())),
    }
    Ok(json!({ "command": "render", "files": files }))
}

fn eval_cmd(a: EvalArgs, seed: u64) -> Result<Value> {
    let split = parse_split(&a.split)?;
    let manifest = evalkit::load_manifest(&a.data)?;
    let views = evalkit::load_views(&a.data, &manifest, split)?;
    if views.is_empty() {
        return Err(Error::Data(format!("split {split} of {} is empty", a.data.display())));
    }
    let mut indices: Vec<usize> = manifest.split(split).map(|r| r.index).collect();
    indices.sort_unstable();
    let preds: Vec<HdrImage> = match (&a.checkpoint, &a.images) {
        (Some(ck), None) => {
            let cfg = march_config(a.spp, &a.visibility, seed)?;
            let scene = load_scene_file(&a.data.join(evalkit::SCENE_FILE))?.scene;
            let (net, _) = load_network(ck)?;
            let model = NeuralModel::new(&net);
            let mut out = Vec::new();
            for v in &views {
                out.push(render_image(&model, &v.camera, &Illumination::from_scene(&scene, v.light), &cfg)?);
            }
            out
        }
        (None, Some(dir)) => indices
            .iter()
            .map(|i| read_pfm(&dir.join(format!("{i}.pfm"))))
            .collect::<Result<_>>()?,
        _ => return Err(Error::Usage("eval needs exactly one of --checkpoint or --images".into())),
    };
    let mut per_image = Vec::new();
    let (mut sum_p, mut sum_s) = (0.0, 0.0);
    for ((v, img), i) in views.iter().zip(&preds).zip(&indices) {
        let p = psnr(img, &v.image)?;
        let s = ssim(img, &v.image)?;
        info!("{split}/{i}: psnr {p:.3} ssim {s:.4}");
        sum_p += p;
        sum_s += s;
        per_image.push(json!({ "index": i, "psnr": metric(p), "ssim": s }));
    }
    let n = views.len() as f64;
    let summary = json!({
        "command": "eval",
        "split": split.name(),
        "images": views.len(),
        "psnr": metric(sum_p / n),
        "ssim": sum_s / n,
        "per_image": per_image,
    });
    if let Some(out) = &a.out {
        mkdir(out)?;
        if a.checkpoint.is_some() {
            for (img, i) in preds.iter().zip(&indices) {
                write_render(&out.join(format!("{i}.pfm")), img, true)?;
            }
        }
        write_json(&out.join("eval.json"), &summary)?;
    }
    Ok(summary)
}

fn extract_cmd(a: ExtractArgs) -> Result<Value> {
    let (net, _) = load_network(&a.checkpoint)?;
    let field = extract_grids(&net, [a.res; 3], media::ops::DEFAULT_GRID_BYTES_CAP)?;
    let scene = SceneDescription::single(field)?;
    mkdir(&a.out)?;
    let path = a.out.join("extracted.json");
    media::save_scene(&path, &scene, None)?;
    Ok(json!({ "command": "extract", "scene": path, "res": a.res }))
}

fn parse_albedo_edit(s: &str) -> Result<Edit> {
    let (ch, k) = s
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("--albedo expects CH=K, got '{s}'")))?;
    let k: f64 = k
        .parse()
        .map_err(|_| Error::Usage(format!("--albedo factor '{k}' is not a number")))?;
    Edit::albedo(ch, k).map_err(|e| Error::Usage(e.to_string()))
}

fn edit_cmd(a: EditArgs) -> Result<Value> {
    let mut edits = Vec::new();
    if let Some(k) = a.density {
        edits.push(Edit::DensityScale(k));
    }
    for s in &a.albedo {
        edits.push(parse_albedo_edit(s)?);
    }
    if edits.is_empty() {
        return Err(Error::Usage("edit needs --density or --albedo".into()));
    }
    let file = load_scene_file(&a.scene)?;
    let mut scene = file.scene;
    for inst in &mut scene.instances {
        let mut field = match &inst.field.kind {
            FieldKind::Grid(_) => (*inst.field).clone(),
            _ => extract_grids(&*inst.field, [a.res; 3], media::ops::DEFAULT_GRID_BYTES_CAP)?,
        };
        for e in &edits {
            field = apply_edit(&field, *e)?;
        }
        inst.field = std::sync::Arc::new(field);
    }
    mkdir(&a.out)?;
    let path = a.out.join("edited.json");
    media::save_scene(&path, &scene, file.camera.as_ref())?;
    Ok(json!({ "command": "edit", "scene": path, "edits": edits.len() }))
}

fn parse_vec3(s: &str) -> Result<Vec3> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Usage(format!("'{s}' is not X,Y,Z")))?;
    match v.as_slice() {
        [x, y, z] => Ok(Vec3::new(*x, *y, *z)),
        _ => Err(Error::Usage(format!("'{s}' is not X,Y,Z"))),
    }
}

fn compose_cmd(a: ComposeArgs) -> Result<Value> {
    if a.translate.len() > a.scene.len() {
        return Err(Error::Usage("more --translate values than --scene files".into()));
    }
    let mut parts = Vec::new();
    let mut camera = None;
    for (i, p) in a.scene.iter().enumerate() {
        let file = load_scene_file(p)?;
        if i == 0 {
            camera = file.camera;
        }
        let t = match a.translate.get(i) {
            Some(s) => Transform::translate(parse_vec3(s)?),
            None => Transform::IDENTITY,
        };
        parts.push((file.scene, t));
    }
    let scene = media::compose(&parts)?;
    mkdir(&a.out)?;
    let path = a.out.join("composed.json");
    media::save_scene(&path, &scene, camera.as_ref())?;
    Ok(json!({ "command": "compose", "scene": path, "instances": scene.instances.len() }))
}

/// Long flag names of every subcommand, for documentation checks.
pub fn flag_names() -> Vec<(String, Vec<String>)> {
    let mut cmd = Cli::command();
    cmd.build();
    cmd.get_subcommands()
        .map(|s| {
            (
                s.get_name().to_string(),
                s.get_arguments().filter_map(|a| a.get_long().map(str::to_string)).collect(),
            )
        })
        .collect()
}

/// Names accepted by `--preset`.
pub fn preset_names() -> &'static [&'static str] {
    &PRESET_NAMES
}
