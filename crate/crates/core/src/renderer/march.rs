use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{Segment, VisibilitySource, VolumeModel};
use super::shading::{composite, shade_point, PointInput, PointShade, RayRadiance, ShadingContext};
use crate::camera::Camera;
use crate::error::{domain_err, Error, Result};
use crate::image::HdrImage;
use crate::light::{EnvLight, LightCondition};
use crate::mathkit::{RngStream, Vec3};
use crate::media::{MediumSample, Ray, SceneDescription};

const DOMAIN_RENDER: u64 = 0x5245_4e44;

/// Ray-marching settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarchConfig {
    /// Stratified samples per camera ray.
    pub n_samples: usize,
    /// Uniform directions for the SH integral, shared by a batch.
    pub k_dirs: usize,
    /// Stratified environment shadow directions.
    pub env_dirs: usize,
    /// Shadow rays per point light (one ray is exact for a point light).
    pub point_shadow_rays: usize,
    pub visibility_source: VisibilitySource,
    /// Use the literal `1/K` SH estimator without the `4 pi` factor.
    pub literal_estimator: bool,
    /// Camera rays sharing one set of SH and environment directions.
    pub rays_per_batch: usize,
    pub seed: u64,
}

impl Default for MarchConfig {
    fn default() -> Self {
        Self {
            n_samples: 64,
            k_dirs: 64,
            env_dirs: 32,
            point_shadow_rays: 1,
            visibility_source: VisibilitySource::Learned,
            literal_estimator: false,
            rays_per_batch: 64,
            seed: 0,
        }
    }
}

impl MarchConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_samples", self.n_samples),
            ("k_dirs", self.k_dirs),
            ("env_dirs", self.env_dirs),
            ("point_shadow_rays", self.point_shadow_rays),
            ("rays_per_batch", self.rays_per_batch),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(domain_err!("{name} must be >= 1"));
            }
        }
        Ok(())
    }
}

/// Light condition plus the scene-level lighting it is rendered under.
#[derive(Clone, Debug, PartialEq)]
pub struct Illumination {
    pub light: LightCondition,
    pub env: EnvLight,
    pub background: Vec3,
}

impl Illumination {
    pub fn new(light: LightCondition) -> Self {
        Self {
            light,
            env: EnvLight::default(),
            background: Vec3::ZERO,
        }
    }

    pub fn from_scene(scene: &SceneDescription, light: LightCondition) -> Self {
        Self {
            light,
            env: scene.env.clone(),
            background: scene.background,
        }
    }
}

/// Stratified jittered sample positions of a batch of rays.
#[derive(Clone, Debug, Default)]
pub struct RaySamples {
    /// Per ray: stratum width and the range of its points in `points`
    /// (empty for rays that miss the domain).
    pub spans: Vec<(f64, std::ops::Range<usize>)>,
    pub points: Vec<Vec3>,
    /// Index of the owning ray for every point.
    pub owner: Vec<usize>,
}

impl RaySamples {
    pub fn draw(model: &dyn VolumeModel, rays: &[Ray], n: usize, rng: &mut RngStream) -> Self {
        Self::draw_with(|r| model.ray_interval(r), rays, n, rng)
    }

    /// `n` jittered strata per ray over the interval given by `interval`.
    pub fn draw_with(interval: impl Fn(&Ray) -> Option<(f64, f64)>, rays: &[Ray], n: usize, rng: &mut RngStream) -> Self {
        let mut s = RaySamples::default();
        for (i, ray) in rays.iter().enumerate() {
            let start = s.points.len();
            let mut dt = 0.0;
            if let Some((t0, t1)) = interval(ray) {
                dt = (t1 - t0) / n as f64;
                for j in 0..n {
                    s.points.push(ray.at(t0 + (j as f64 + rng.uniform()) * dt));
                    s.owner.push(i);
                }
            }
            s.spans.push((dt, start..s.points.len()));
        }
        s
    }
}

/// Shadow segments of every point: the point-light segment (when lit)
/// followed by the environment directions. Returns the segments and, per
/// point, the index of its first segment.
pub fn shadow_segments(ctx: &ShadingContext, points: &[Vec3]) -> (Vec<Segment>, Vec<usize>) {
    let env = ctx.active_env();
    let mut segs = Vec::with_capacity(points.len() * (1 + env.len()));
    let mut first = Vec::with_capacity(points.len());
    for &p in points {
        first.push(segs.len());
        if let Some((d, len)) = ctx.light_dir(p) {
            segs.push((p, d, len));
        }
        segs.extend(env.iter().map(|&d| (p, d, f64::INFINITY)));
    }
    (segs, first)
}

/// Everything computed for the points of a batch before compositing.
pub struct ShadedBatch {
    pub samples: RaySamples,
    pub props: Vec<MediumSample>,
    pub coeffs: Vec<f64>,
    pub shade: Vec<PointShade>,
}

fn check_finite(v: Vec3, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite {what} radiance")))
    }
}

/// Samples, queries and shades the points of `rays`.
pub fn shade_batch(
    model: &dyn VolumeModel,
    rays: &[Ray],
    ctx: &ShadingContext,
    cfg: &MarchConfig,
    rng: &mut RngStream,
) -> Result<ShadedBatch> {
    let samples = RaySamples::draw(model, rays, cfg.n_samples, rng);
    let (props, coeffs) = model.query(&samples.points, &ctx.light)?;
    let (segs, first) = shadow_segments(ctx, &samples.points);
    let vis = model.visibility(cfg.visibility_source, &segs)?;
    let nc = 3 * ctx.n_coeffs;
    let ne = ctx.active_env().len();
    let mut shade = Vec::with_capacity(samples.points.len());
    for (i, &p) in samples.points.iter().enumerate() {
        let lit = ctx.light_dir(p).is_some();
        let f = first[i];
        let x = PointInput {
            p,
            w_o: -rays[samples.owner[i]].dir.vec(),
            g: props[i].g,
            coeffs: if nc > 0 && !coeffs.is_empty() { &coeffs[i * nc..(i + 1) * nc] } else { &[] },
            vis_light: if lit { vis[f] } else { 0.0 },
            vis_env: &vis[f + usize::from(lit)..f + usize::from(lit) + ne],
        };
        let s = shade_point(ctx, &x);
        check_finite(s.single + s.multi, "point")?;
        shade.push(s);
    }
    Ok(ShadedBatch {
        samples,
        props,
        coeffs,
        shade,
    })
}

/// Marches a batch of rays that share one set of sampled directions.
pub fn march_batch(
    model: &dyn VolumeModel,
    rays: &[Ray],
    illum: &Illumination,
    cfg: &MarchConfig,
    rng: &mut RngStream,
) -> Result<Vec<RayRadiance>> {
    cfg.validate()?;
    let ctx = ShadingContext::sample(&illum.light, &illum.env, cfg.k_dirs, cfg.env_dirs, model.sh_band(), cfg.literal_estimator, rng)?;
    let b = shade_batch(model, rays, &ctx, cfg, rng)?;
    let mut out = Vec::with_capacity(rays.len());
    for (dt, range) in &b.samples.spans {
        let sigma: Vec<f64> = b.props[range.clone()].iter().map(|m| m.sigma).collect();
        let (single, multi): (Vec<Vec3>, Vec<Vec3>) = range
            .clone()
            .map(|i| (b.props[i].albedo.mul_elem(b.shade[i].single), b.props[i].albedo.mul_elem(b.shade[i].multi)))
            .unzip();
        let r = composite(&sigma, *dt, &single, &multi, illum.background);
        check_finite(r.total(), "ray")?;
        out.push(r);
    }
    Ok(out)
}

/// Marches one ray; returns `(total, direct, indirect)`.
pub fn march_ray(model: &dyn VolumeModel, ray: &Ray, illum: &Illumination, cfg: &MarchConfig) -> Result<(Vec3, Vec3, Vec3)> {
    let mut rng = RngStream::split(cfg.seed, DOMAIN_RENDER, 0);
    let r = march_batch(model, std::slice::from_ref(ray), illum, cfg, &mut rng)?[0];
    Ok((r.total(), r.direct, r.indirect))
}

/// Renders every pixel, with direct and indirect layers. Pixels are grouped
/// into fixed batches with their own random streams, so the result does not
/// depend on the number of threads.
pub fn render_image(model: &dyn VolumeModel, camera: &Camera, illum: &Illumination, cfg: &MarchConfig) -> Result<HdrImage> {
    camera.validate()?;
    cfg.validate()?;
    illum.light.validate()?;
    let n = camera.pixel_count();
    let chunks: Vec<Vec<RayRadiance>> = (0..n.div_ceil(cfg.rays_per_batch))
        .into_par_iter()
        .map(|c| {
            let rays: Vec<Ray> = (c * cfg.rays_per_batch..((c + 1) * cfg.rays_per_batch).min(n)).map(|i| camera.ray_index(i)).collect();
            let mut rng = RngStream::split(cfg.seed, DOMAIN_RENDER, c as u64);
            march_batch(model, &rays, illum, cfg, &mut rng)
        })
        .collect::<Result<_>>()?;
    let (d, i): (Vec<Vec3>, Vec<Vec3>) = chunks.into_iter().flatten().map(|r| (r.direct, r.indirect)).unzip();
    HdrImage::from_layers(camera.width, camera.height, &d, &i)
}

/// Single-scattering radiance leaving `p` towards `w_o` for one sample.
pub fn single_scatter(
    model: &dyn VolumeModel,
    p: Vec3,
    w_o: crate::mathkit::Direction,
    sample: &MediumSample,
    illum: &Illumination,
    cfg: &MarchConfig,
    rng: &mut RngStream,
) -> Result<Vec3> {
    let ctx = ShadingContext::sample(&illum.light, &illum.env, cfg.k_dirs, cfg.env_dirs, None, cfg.literal_estimator, rng)?;
    let (segs, _) = shadow_segments(&ctx, &[p]);
    let vis = model.visibility(cfg.visibility_source, &segs)?;
    let lit = ctx.light_dir(p).is_some();
    let x = PointInput {
        p,
        w_o: w_o.vec(),
        g: sample.g,
        coeffs: &[],
        vis_light: if lit { vis[0] } else { 0.0 },
        vis_env: &vis[usize::from(lit)..],
    };
    Ok(sample.albedo.mul_elem(shade_point(&ctx, &x).single))
}

/// Multiple-scattering radiance leaving `p` towards `w_o` given the point's
/// SH coefficients (`3 n` channel-major).
pub fn multiple_scatter(
    p: Vec3,
    w_o: crate::mathkit::Direction,
    sample: &MediumSample,
    coeffs: &[f64],
    l_max: usize,
    cfg: &MarchConfig,
    rng: &mut RngStream,
) -> Result<Vec3> {
    let ctx = ShadingContext::sample(&LightCondition::point(p, 0.0), &EnvLight::default(), cfg.k_dirs, cfg.env_dirs, Some(l_max), cfg.literal_estimator, rng)?;
    if coeffs.len() != 3 * ctx.n_coeffs {
        return Err(domain_err!("expected {} coefficients, got {}", 3 * ctx.n_coeffs, coeffs.len()));
    }
    let x = PointInput {
        p,
        w_o: w_o.vec(),
        g: sample.g,
        coeffs,
        vis_light: 0.0,
        vis_env: &[],
    };
    Ok(sample.albedo.mul_elem(shade_point(&ctx, &x).multi))
}
