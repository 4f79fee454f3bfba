use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};

use super::batch::{evaluate, prepare_batch, PreparedBatch, Terms, TrainingSet};
use super::config::TrainConfig;
use crate::autodiff::{adam_step, lr_at, AdamState};
use crate::error::{Error, Result};
use crate::fields::{load_network, save_network, NetworkConfig, NetworkSet};
use crate::mathkit::RngStream;

const DOMAIN_TRAIN: u64 = 0x5452_4149_4e;

pub const CHECKPOINT_FILE: &str = "model.nmckpt";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const LOCK_FILE: &str = "train.lock";

/// Metrics of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    pub iteration: u64,
    pub lr: f64,
    pub render_loss: f64,
    pub visibility_loss: f64,
    pub grad_norm: f64,
}

/// One forward/backward/Adam cycle at `lr_at(iteration)`. A step with
/// non-finite gradients is rejected and leaves the parameters unchanged.
pub fn train_step(
    net: &mut NetworkSet<f32>,
    adam: &mut AdamState<f32>,
    batch: &PreparedBatch,
    iteration: u64,
    cfg: &TrainConfig,
) -> Result<StepMetrics> {
    let ev = evaluate(net, batch, Terms::BOTH, true)?;
    let lr = lr_at(iteration, cfg.total_iters, cfg.lr_start, cfg.lr_end);
    let grad_norm = net.params.grad_norm();
    adam_step(&mut net.params, adam, lr, &cfg.adam)?;
    Ok(StepMetrics {
        iteration,
        lr,
        render_loss: ev.render,
        visibility_loss: ev.visibility,
        grad_norm,
    })
}

/// Holds the per-directory training lock until dropped.
struct DirLock(PathBuf);

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::State(format!(
                "{} exists: another training run owns this directory",
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Result of [`train`].
#[derive(Debug)]
pub struct TrainOutcome {
    pub net: NetworkSet<f32>,
    pub adam: AdamState<f32>,
    /// Every step run in this call.
    pub metrics: Vec<StepMetrics>,
    pub final_iteration: u64,
}

/// Where and how a run persists its state.
#[derive(Clone, Debug, Default)]
pub struct RunDir {
    pub dir: Option<PathBuf>,
    /// Continue from the checkpoint in `dir` when one exists.
    pub resume: bool,
    /// Run at most this many iterations in this call, then checkpoint.
    pub stop_after: Option<u64>,
}

/// Optimizes a fresh (or resumed) network set on `set`. Iteration `i`
/// draws its batch from a stream keyed by `(seed, i)`, so resuming
/// reproduces an uninterrupted run.
pub fn train(set: &TrainingSet, net_cfg: NetworkConfig, cfg: &TrainConfig, run: &RunDir) -> Result<TrainOutcome> {
    cfg.validate()?;
    net_cfg.validate()?;
    if set.records.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    for r in &set.records {
        r.validate()?;
    }
    let _lock = match &run.dir {
        Some(d) => {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            Some(DirLock::acquire(d)?)
        }
        None => None,
    };
    let ckpt_path = run.dir.as_ref().map(|d| d.join(CHECKPOINT_FILE));
    let (mut net, mut adam, start) = match &ckpt_path {
        Some(p) if run.resume && p.exists() => {
            let (net, ck) = load_network(p)?;
            if net.cfg != net_cfg {
                return Err(Error::Data(format!("{}: network configuration differs from the requested one", p.display())));
            }
            let adam = ck.adam.ok_or_else(|| Error::Data(format!("{}: no optimizer state to resume", p.display())))?;
            info!("resuming from iteration {}", ck.iteration);
            (net, adam, ck.iteration)
        }
        _ => {
            let net = NetworkSet::<f32>::init(net_cfg, cfg.seed)?;
            let adam = AdamState::new(&net.params);
            (net, adam, 0)
        }
    };
    let mut log = match &run.dir {
        Some(d) => {
            let p = d.join(METRICS_FILE);
            let fresh = start == 0 || !p.exists();
            let mut f = OpenOptions::new()
                .create(true)
                .append(!fresh)
                .write(true)
                .truncate(fresh)
                .open(&p)
                .map_err(|e| Error::io(&p, e))?;
            if fresh {
                writeln!(f, "iteration\tlr\trender_loss\tvisibility_loss\twall_s").map_err(|e| Error::io(&p, e))?;
            }
            Some((f, p))
        }
        None => None,
    };
    let t0 = Instant::now();
    let mut metrics = Vec::new();
    let end = run.stop_after.map_or(cfg.total_iters, |n| (start + n).min(cfg.total_iters));
    for it in start..end {
        let mut rng = RngStream::split(cfg.seed, DOMAIN_TRAIN, it);
        let batch = prepare_batch(&net, set, cfg, &mut rng)?;
        let m = train_step(&mut net, &mut adam, &batch, it, cfg)?;
        metrics.push(m);
        let last = it + 1 == end;
        if it % cfg.log_every == 0 || last {
            info!(
                "iter {it} lr {:.3e} render {:.5} visibility {:.5} |g| {:.3e}",
                m.lr, m.render_loss, m.visibility_loss, m.grad_norm
            );
            if let Some((f, p)) = &mut log {
                write_row(f, p, &m, t0.elapsed().as_secs_f64())?;
            }
        }
        if let Some(p) = &ckpt_path {
            if last || (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0) {
                save_network(p, &net, Some(&adam), it + 1)?;
            }
        }
    }
    if metrics.is_empty() {
        warn!("no iterations left to run (start {start}, total {})", cfg.total_iters);
    }
    Ok(TrainOutcome {
        net,
        adam,
        metrics,
        final_iteration: end.max(start),
    })
}

fn write_row(f: &mut File, p: &Path, m: &StepMetrics, wall: f64) -> Result<()> {
    writeln!(
        f,
        "{}\t{:.6e}\t{:.9e}\t{:.9e}\t{:.3}",
        m.iteration, m.lr, m.render_loss, m.visibility_loss, wall
    )
    .map_err(|e| Error::io(p, e))
}
