//! Training rays, batch preparation and the loss with its gradients.

use std::collections::BTreeMap;

use crate::autodiff::{Matrix, NodeId, Real, Tape};
use crate::camera::Camera;
use crate::error::{domain_err, Error, Result};
use crate::fields::NetworkSet;
use crate::image::HdrImage;
use crate::light::{EnvLight, LightCondition};
use crate::mathkit::tone::{tone_map_scalar, tone_map_scalar_grad};
use crate::mathkit::{Direction, RngStream, Vec3};
use crate::media::Ray;
use crate::renderer::shading::{composite, composite_grad, shade_point_grad, shade_point_signed, shade_point_vis_grad, PointInput};
use crate::renderer::{RayRadiance, RaySamples, Segment, ShadingContext, VisibilitySource};

use super::config::TrainConfig;

/// One supervised camera ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayRecord {
    pub origin: Vec3,
    pub dir: Direction,
    pub radiance: Vec3,
    pub light: LightCondition,
    pub image: u32,
}

impl RayRecord {
    pub fn validate(&self) -> Result<()> {
        let r = self.radiance;
        if !(r.is_finite() && r.x >= 0.0 && r.y >= 0.0 && r.z >= 0.0) {
            return Err(Error::Data(format!("image {}: radiance {r:?} must be finite and >= 0", self.image)));
        }
        if !self.origin.is_finite() {
            return Err(Error::Data(format!("image {}: ray origin not finite", self.image)));
        }
        self.light.validate()
    }
}

/// A posed image with its light condition.
#[derive(Clone, Debug)]
pub struct TrainingView {
    pub camera: Camera,
    pub light: LightCondition,
    pub image: HdrImage,
}

/// All training rays plus the scene-level lighting they were rendered under.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub records: Vec<RayRecord>,
    pub env: EnvLight,
    pub background: Vec3,
}

impl TrainingSet {
    /// One record per pixel of every view. Fails before any training when a
    /// view's camera and image disagree.
    pub fn from_views(views: &[TrainingView], env: EnvLight, background: Vec3) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::Data("training set has no views".into()));
        }
        let mut records = Vec::new();
        for (k, v) in views.iter().enumerate() {
            v.camera.validate().map_err(|e| Error::Data(format!("view {k}: {e}")))?;
            if (v.camera.width, v.camera.height) != (v.image.width, v.image.height) {
                return Err(Error::Data(format!(
                    "view {k}: camera is {}x{}, image is {}x{}",
                    v.camera.width, v.camera.height, v.image.width, v.image.height
                )));
            }
            for i in 0..v.camera.pixel_count() {
                let ray = v.camera.ray_index(i);
                let rec = RayRecord {
                    origin: ray.origin,
                    dir: ray.dir,
                    radiance: v.image.pixel(i),
                    light: v.light,
                    image: k as u32,
                };
                rec.validate().map_err(|e| Error::Data(format!("view {k}: {e}")))?;
                records.push(rec);
            }
        }
        Ok(Self {
            records,
            env,
            background,
        })
    }
}

/// Which loss terms enter the objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Terms {
    pub render: bool,
    pub visibility: bool,
}

impl Terms {
    pub const BOTH: Terms = Terms {
        render: true,
        visibility: true,
    };
}

/// A batch with every random choice and every gradient-free quantity fixed,
/// so evaluating it is a deterministic function of the parameters.
#[derive(Clone, Debug)]
pub struct PreparedBatch {
    pub rays: Vec<Ray>,
    pub targets: Vec<Vec3>,
    /// Light condition of each ray.
    pub lights: Vec<LightCondition>,
    pub samples: RaySamples,
    pub contexts: Vec<ShadingContext>,
    /// Index into `contexts` per ray.
    pub ray_ctx: Vec<usize>,
    /// `Learned` mode: shadow visibility per segment, treated as constant.
    pub shadow: Vec<f64>,
    /// `Oracle` mode: jittered density sample positions, an equal number
    /// per shadow segment, and the sample spacing of every segment.
    pub shadow_points: Vec<Vec3>,
    pub shadow_dt: Vec<f64>,
    /// First shadow segment of every point.
    pub shadow_first: Vec<usize>,
    pub vis_pairs: Vec<(Vec3, Direction)>,
    /// Visibility targets marched through the learned density.
    pub vis_targets: Vec<f64>,
    pub background: Vec3,
    pub mu: f64,
}

fn point_segments(ctx: &ShadingContext, p: Vec3, out: &mut Vec<Segment>) {
    if let Some((d, len)) = ctx.light_dir(p) {
        out.push((p, d, len));
    }
    out.extend(ctx.active_env().iter().map(|&d| (p, d, f64::INFINITY)));
}

/// Transmittance from `p` along `d` through the network's current density,
/// up to `dist` or the domain boundary. No gradients are recorded.
pub fn visibility_target<T: Real>(net: &NetworkSet<T>, p: Vec3, d: Direction, dist: f64, steps: usize) -> Result<f64> {
    Ok(net.marched_transmittance(&[(p, d, dist)], steps)?[0])
}

/// Draws the rays of one iteration (uniformly over all records) and fixes
/// everything the objective treats as constant.
pub fn prepare_batch<T: Real>(
    net: &NetworkSet<T>,
    set: &TrainingSet,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<PreparedBatch> {
    if set.records.is_empty() {
        return Err(Error::Data("no training rays".into()));
    }
    let picks: Vec<&RayRecord> = (0..cfg.batch_rays).map(|_| &set.records[rng.below(set.records.len())]).collect();
    prepare_records(net, &picks, &set.env, set.background, cfg, rng)
}

/// [`prepare_batch`] for an explicit list of records.
pub fn prepare_records<T: Real>(
    net: &NetworkSet<T>,
    picks: &[&RayRecord],
    env: &EnvLight,
    background: Vec3,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<PreparedBatch> {
    cfg.validate()?;
    if picks.is_empty() {
        return Err(domain_err!("batch must hold at least one ray"));
    }
    let rays: Vec<Ray> = picks.iter().map(|r| Ray::new(r.origin, r.dir)).collect();
    let domain = net.cfg.domain;
    let samples = RaySamples::draw_with(
        |r| domain.intersect(r.origin, r.dir.vec(), f64::INFINITY).filter(|(a, b)| b > a),
        &rays,
        cfg.n_samples,
        rng,
    );
    let l_max = net.cfg.sh_enabled.then_some(net.cfg.l_max);
    let base = ShadingContext::sample(&picks[0].light, env, cfg.k_dirs, cfg.env_dirs, l_max, cfg.literal_estimator, rng)?;
    let mut by_image = BTreeMap::new();
    let mut contexts = Vec::new();
    let mut ray_ctx = Vec::with_capacity(picks.len());
    for r in picks {
        let idx = *by_image.entry(r.image).or_insert_with(|| {
            contexts.push(base.for_light(&r.light));
            contexts.len() - 1
        });
        ray_ctx.push(idx);
    }
    let mut segs = Vec::new();
    let mut shadow_first = Vec::with_capacity(samples.points.len());
    for (i, &p) in samples.points.iter().enumerate() {
        shadow_first.push(segs.len());
        point_segments(&contexts[ray_ctx[samples.owner[i]]], p, &mut segs);
    }
    let (shadow, shadow_points, shadow_dt) = match cfg.visibility_source {
        VisibilitySource::Learned => {
            let pairs: Vec<(Vec3, Direction)> = segs.iter().map(|&(p, d, _)| (p, d)).collect();
            (net.query_visibility(&pairs)?, Vec::new(), Vec::new())
        }
        VisibilitySource::Oracle => {
            let m = cfg.shadow_steps;
            let mut pts = Vec::with_capacity(segs.len() * m);
            let mut dts = Vec::with_capacity(segs.len());
            for &(p, d, dist) in &segs {
                let (t0, t1) = domain.intersect(p, d.vec(), dist).unwrap_or((0.0, 0.0));
                let t0 = t0.max(0.0);
                let dt = (t1 - t0).max(0.0) / m as f64;
                dts.push(dt);
                for k in 0..m {
                    pts.push(p + d.vec() * (t0 + (k as f64 + rng.uniform()) * dt));
                }
            }
            (Vec::new(), pts, dts)
        }
    };
    let mut vis_segs = Vec::new();
    for (dt, range) in &samples.spans {
        let n = range.len();
        if n == 0 || *dt == 0.0 {
            continue;
        }
        let m = cfg.vis_samples_per_ray.min(n);
        for k in 0..m {
            let j = range.start + (((k as f64 + rng.uniform()) * n as f64 / m as f64) as usize).min(n - 1);
            let p = samples.points[j];
            let ctx = &contexts[ray_ctx[samples.owner[j]]];
            if let Some((d, len)) = ctx.light_dir(p) {
                vis_segs.push((p, d, len));
            }
            let env = ctx.active_env();
            if !env.is_empty() {
                vis_segs.push((p, env[rng.below(env.len())], f64::INFINITY));
            }
        }
    }
    let vis_targets = if cfg.mu > 0.0 && !vis_segs.is_empty() {
        net.marched_transmittance(&vis_segs, cfg.vis_target_steps)?
    } else {
        vec![0.0; vis_segs.len()]
    };
    Ok(PreparedBatch {
        targets: picks.iter().map(|r| r.radiance).collect(),
        lights: picks.iter().map(|r| r.light).collect(),
        rays,
        samples,
        contexts,
        ray_ctx,
        shadow,
        shadow_points,
        shadow_dt,
        shadow_first,
        vis_pairs: vis_segs.iter().map(|&(p, d, _)| (p, d)).collect(),
        vis_targets,
        background,
        mu: cfg.mu,
    })
}

/// `sum_rays |Γ(L) - Γ(L̂)|^2`.
pub fn render_loss(pred: &[Vec3], target: &[Vec3]) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(p, t)| {
            (0..3)
                .map(|c| (tone_map_scalar(p[c]) - tone_map_scalar(t[c])).powi(2))
                .sum::<f64>()
        })
        .sum()
}

/// `mu * sum |V - V̂|^2`.
pub fn visibility_loss(v: &[f64], target: &[f64], mu: f64) -> f64 {
    mu * v.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
}

/// Loss terms of one evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub render: f64,
    pub visibility: f64,
    /// Sum of the enabled terms.
    pub loss: f64,
    /// Fingerprint of rectifier and clamp branches.
    pub signature: u64,
    pub predictions: Vec<RayRadiance>,
}

fn column<T: Real>(m: &Matrix<T>, c: usize) -> Vec<f64> {
    (0..m.rows).map(|r| m.get(r, c).as_f64()).collect()
}

/// Evaluates the objective on a prepared batch. With `backward`, parameter
/// gradients of the enabled terms replace those stored in `net`.
pub fn evaluate<T: Real>(net: &mut NetworkSet<T>, batch: &PreparedBatch, terms: Terms, backward: bool) -> Result<Evaluation> {
    let pts = &batch.samples.points;
    let np = pts.len();
    let mut tape = Tape::new();
    let point_lights: Vec<LightCondition> = batch.samples.owner.iter().map(|&o| batch.lights[o]).collect();
    let nodes = if np > 0 {
        Some(net.record_points(&mut tape, pts, &point_lights)?)
    } else {
        None
    };
    let nc3 = 3 * net.sh_count();
    let (sigma, albedo, g, coeffs) = match &nodes {
        Some(n) => {
            let a = tape.value(n.albedo);
            let al: Vec<Vec3> = (0..np)
                .map(|i| Vec3::new(a.get(i, 0).as_f64(), a.get(i, 1).as_f64(), a.get(i, 2).as_f64()))
                .collect();
            let co = n.sh.map_or_else(Vec::new, |s| tape.value(s).as_f64());
            (column(tape.value(n.sigma), 0), al, column(tape.value(n.g), 0), co)
        }
        None => Default::default(),
    };
    // marched shadows are recomputed from the current density so that they
    // can be differentiated
    let marched = if batch.shadow_dt.is_empty() {
        None
    } else {
        let node = net.record_density(&mut tape, &batch.shadow_points)?;
        let m = batch.shadow_points.len() / batch.shadow_dt.len();
        let t: Vec<f64> = column(tape.value(node), 0)
            .chunks(m)
            .zip(&batch.shadow_dt)
            .map(|(s, &dt)| (-s.iter().sum::<f64>() * dt).exp())
            .collect();
        Some((node, m, t))
    };
    let shadow: &[f64] = marched.as_ref().map_or(&batch.shadow, |m| &m.2);
    let mut d_shadow = vec![0.0; if marched.is_some() { shadow.len() } else { 0 }];
    let input = |i: usize| {
        let ctx = &batch.contexts[batch.ray_ctx[batch.samples.owner[i]]];
        let f = batch.shadow_first[i];
        let lit = ctx.light_dir(pts[i]).is_some();
        let ne = ctx.active_env().len();
        let off = f + usize::from(lit);
        (
            ctx,
            PointInput {
                p: pts[i],
                w_o: -batch.rays[batch.samples.owner[i]].dir.vec(),
                g: g[i],
                coeffs: if nc3 > 0 { &coeffs[i * nc3..(i + 1) * nc3] } else { &[] },
                vis_light: if lit { shadow[f] } else { 0.0 },
                vis_env: &shadow[off..off + ne],
            },
        )
    };
    let mut signature = 0u64;
    let shade: Vec<_> = (0..np)
        .map(|i| {
            let (ctx, x) = input(i);
            let (s, sig) = shade_point_signed(ctx, &x);
            signature = (signature ^ sig).wrapping_mul(0x0100_0000_01b3);
            s
        })
        .collect();
    let mut predictions = Vec::with_capacity(batch.rays.len());
    let mut d_sigma = vec![0.0; np];
    let mut d_albedo = vec![0.0; 3 * np];
    let mut d_g = vec![0.0; np];
    let mut d_coeffs = vec![0.0; np * nc3];
    for (r, (dt, range)) in batch.samples.spans.iter().enumerate() {
        let s = &sigma[range.clone()];
        let single: Vec<Vec3> = range.clone().map(|i| albedo[i].mul_elem(shade[i].single)).collect();
        let multi: Vec<Vec3> = range.clone().map(|i| albedo[i].mul_elem(shade[i].multi)).collect();
        let pred = composite(s, *dt, &single, &multi, batch.background);
        predictions.push(pred);
        if !(backward && terms.render) || range.is_empty() {
            continue;
        }
        let l = pred.total();
        let t = batch.targets[r];
        let mut up = [0.0; 3];
        for (c, u) in up.iter_mut().enumerate() {
            *u = 2.0 * (tone_map_scalar(l[c]) - tone_map_scalar(t[c])) * tone_map_scalar_grad(l[c]);
        }
        let up = Vec3::from(up);
        let rad: Vec<Vec3> = single.iter().zip(&multi).map(|(a, b)| *a + *b).collect();
        let (ds, w) = composite_grad(s, *dt, &rad, batch.background, up);
        for (k, i) in range.clone().enumerate() {
            d_sigma[i] = ds[k];
            let d_rad = up * w[k];
            let da = d_rad.mul_elem(shade[i].single + shade[i].multi);
            d_albedo[3 * i..3 * i + 3].copy_from_slice(&da.to_array());
            let d_x = d_rad.mul_elem(albedo[i]);
            let (ctx, x) = input(i);
            let dc = if nc3 > 0 { &mut d_coeffs[i * nc3..(i + 1) * nc3] } else { &mut [][..] };
            d_g[i] = shade_point_grad(ctx, &x, d_x, d_x, dc).0;
            if !d_shadow.is_empty() {
                let f = batch.shadow_first[i];
                let end = batch.shadow_first.get(i + 1).copied().unwrap_or(shadow.len());
                shade_point_vis_grad(ctx, &x, d_x, &mut d_shadow[f..end]);
            }
        }
    }
    let targets: Vec<Vec3> = batch.targets.clone();
    let pred_totals: Vec<Vec3> = predictions.iter().map(|p| p.total()).collect();
    let render = render_loss(&pred_totals, &targets);
    let mut visibility = 0.0;
    let mut vis_seed: Option<(NodeId, Matrix<T>)> = None;
    if !batch.vis_pairs.is_empty() {
        let vnode = net.record_visibility(&mut tape, &batch.vis_pairs)?;
        let v = tape.value(vnode).as_f64();
        visibility = visibility_loss(&v, &batch.vis_targets, batch.mu);
        if backward && terms.visibility {
            let d: Vec<f64> = v.iter().zip(&batch.vis_targets).map(|(a, b)| 2.0 * batch.mu * (a - b)).collect();
            vis_seed = Some((vnode, Matrix::from_f64(d.len(), 1, &d)));
        }
    }
    signature ^= tape.relu_signature();
    let loss = if terms.render { render } else { 0.0 } + if terms.visibility { visibility } else { 0.0 };
    if !loss.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite loss (render {render}, visibility {visibility}) on a batch of {} rays",
            batch.rays.len()
        )));
    }
    if backward {
        net.params.zero_grad();
        let mut seeds = Vec::new();
        if let (Some(n), true) = (&nodes, terms.render) {
            seeds.push((n.sigma, Matrix::from_f64(np, 1, &d_sigma)));
            seeds.push((n.albedo, Matrix::from_f64(np, 3, &d_albedo)));
            seeds.push((n.g, Matrix::from_f64(np, 1, &d_g)));
            if let Some(sh) = n.sh {
                seeds.push((sh, Matrix::from_f64(np, nc3, &d_coeffs)));
            }
        }
        if let (Some((node, m, t)), true) = (&marched, terms.render) {
            let mut d = Vec::with_capacity(batch.shadow_points.len());
            for ((ds, dt), tv) in d_shadow.iter().zip(&batch.shadow_dt).zip(t) {
                d.extend(std::iter::repeat_n(-ds * dt * tv, *m));
            }
            seeds.push((*node, Matrix::from_f64(d.len(), 1, &d)));
        }
        seeds.extend(vis_seed);
        tape.backward(&mut net.params, &seeds)?;
    }
    Ok(Evaluation {
        render,
        visibility,
        loss,
        signature,
        predictions,
    })
}

/// Loss of `records` under the current networks, with its per-term
/// breakdown. Draws its own batch randomness from `rng`; no gradients.
pub fn compute_loss<T: Real>(
    net: &mut NetworkSet<T>,
    records: &[RayRecord],
    env: &EnvLight,
    background: Vec3,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<Evaluation> {
    let picks: Vec<&RayRecord> = records.iter().collect();
    let batch = prepare_records(net, &picks, env, background, cfg, rng)?;
    evaluate(net, &batch, Terms::BOTH, false)
}
