use rayon::prelude::*;

use crate::error::{domain_err, Result};
use crate::light::LightCondition;
use crate::mathkit::sh::{sh_project_least_squares, sh_count};
use crate::mathkit::{sample_sphere, Direction, RngStream, ShCoefficients, SphereSampling, Vec3};
use crate::media::{Aabb, Ray, SceneDescription};

use super::path_tracer::{PathTracerConfig, Tracer};

const DOMAIN_PROBE: u64 = 0x5052_4f42_4500;

/// Brute-force incident radiance at `p` from `n_dirs` stratified directions,
/// counting only light that scattered at least `min_bounces` (1 or 2) times
/// before arriving. Directions point from `p` towards where light comes from.
pub fn incident_radiance_probe(
    scene: &SceneDescription,
    p: Vec3,
    light: &LightCondition,
    n_dirs: usize,
    spp_per_dir: usize,
    min_bounces: usize,
    cfg: &PathTracerConfig,
) -> Result<Vec<(Direction, Vec3)>> {
    if !scene.bounds().contains(p) {
        return Err(domain_err!("probe point {p:?} outside the scene bounds"));
    }
    if !(1..=2).contains(&min_bounces) {
        return Err(domain_err!("min_bounces must be 1 or 2, got {min_bounces}"));
    }
    if spp_per_dir == 0 {
        return Err(domain_err!("spp_per_dir must be >= 1"));
    }
    cfg.validate()?;
    let key = p.x.to_bits() ^ p.y.to_bits().rotate_left(21) ^ p.z.to_bits().rotate_left(42);
    let mut rng = RngStream::split(cfg.seed, DOMAIN_PROBE, key);
    let dirs = sample_sphere(SphereSampling::Stratified, n_dirs, &mut rng)?;
    let tracer = Tracer { scene, light, cfg };
    let mut out = Vec::with_capacity(dirs.len());
    for (w, _) in dirs {
        let mut acc = Vec3::ZERO;
        for _ in 0..spp_per_dir {
            let (r, _) = tracer.trace(Ray::new(p, w), 0, &mut rng)?;
            acc += r.multi;
            if min_bounces == 1 {
                acc += r.single;
            }
        }
        out.push((w, acc / spp_per_dir as f64));
    }
    Ok(out)
}

/// Lattice of probe-projected SH expansions with trilinear interpolation,
/// the ground-truth stand-in for the learned indirect-radiance field.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeGrid {
    pub bounds: Aabb,
    pub res: usize,
    pub l_max: usize,
    /// Channel-major coefficients per node, x fastest.
    coeffs: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeGridConfig {
    /// Nodes per axis (>= 2), placed on the bounds' corners and interior.
    pub res: usize,
    pub l_max: usize,
    pub n_dirs: usize,
    pub spp_per_dir: usize,
}

impl ProbeGrid {
    pub fn build(
        scene: &SceneDescription,
        light: &LightCondition,
        grid: &ProbeGridConfig,
        cfg: &PathTracerConfig,
    ) -> Result<Self> {
        if grid.res < 2 {
            return Err(domain_err!("probe grid needs >= 2 nodes per axis"));
        }
        if grid.n_dirs < sh_count(grid.l_max) {
            return Err(domain_err!("{} probe directions cannot determine band {}", grid.n_dirs, grid.l_max));
        }
        let bounds = scene.bounds();
        let n = grid.res;
        let coeffs = (0..n * n * n)
            .into_par_iter()
            .map(|i| {
                let p = Self::node_position(&bounds, n, i);
                let samples = incident_radiance_probe(scene, p, light, grid.n_dirs, grid.spp_per_dir, 1, cfg)?;
                let (dirs, vals): (Vec<Direction>, Vec<Vec3>) = samples.into_iter().unzip();
                Ok(sh_project_least_squares(grid.l_max, &dirs, &vals)?.to_channel_major())
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            bounds,
            res: n,
            l_max: grid.l_max,
            coeffs,
        })
    }

    fn node_position(b: &Aabb, n: usize, i: usize) -> Vec3 {
        let (x, y, z) = (i % n, (i / n) % n, i / (n * n));
        let f = |k: usize| k as f64 / (n - 1) as f64;
        let e = b.extent();
        // nudge boundary nodes inside so the probe precondition holds
        let inset = |v: f64, lo: f64, hi: f64| v.clamp(lo + 1e-9 * (hi - lo), hi - 1e-9 * (hi - lo));
        Vec3::new(
            inset(b.min.x + f(x) * e.x, b.min.x, b.max.x),
            inset(b.min.y + f(y) * e.y, b.min.y, b.max.y),
            inset(b.min.z + f(z) * e.z, b.min.z, b.max.z),
        )
    }

    /// Interpolated channel-major coefficients at `p` (clamped to the bounds).
    pub fn coeffs_at(&self, p: Vec3, out: &mut [f64]) {
        let n = self.res;
        let e = self.bounds.extent();
        let q = p - self.bounds.min;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let u = (q[a] / e[a] * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
            let b = (u.floor() as usize).min(n - 2);
            base[a] = b;
            frac[a] = u - b as f64;
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for corner in 0..8 {
            let d = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let w: f64 = (0..3).map(|a| if d[a] == 1 { frac[a] } else { 1.0 - frac[a] }).product();
            if w == 0.0 {
                continue;
            }
            let idx = (base[2] + d[2]) * n * n + (base[1] + d[1]) * n + base[0] + d[0];
            for (o, c) in out.iter_mut().zip(&self.coeffs[idx]) {
                *o += w * c;
            }
        }
    }

    pub fn sh_at(&self, p: Vec3) -> ShCoefficients {
        let mut flat = vec![0.0; 3 * sh_count(self.l_max)];
        self.coeffs_at(p, &mut flat);
        ShCoefficients::from_channel_major(self.l_max, &flat).expect("layout")
    }
}
