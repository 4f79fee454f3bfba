use serde::{Deserialize, Serialize};

use crate::error::{domain_err, Result};
use crate::mathkit::rng::mix64;
use crate::mathkit::Vec3;

/// Physical properties at a point.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct MediumSample {
    /// Extinction coefficient (1/length).
    pub sigma: f64,
    pub albedo: Vec3,
    pub g: f64,
}

impl MediumSample {
    pub const VACUUM: MediumSample = MediumSample {
        sigma: 0.0,
        albedo: Vec3::ZERO,
        g: 0.0,
    };

    pub fn new(sigma: f64, albedo: Vec3, g: f64) -> Result<Self> {
        let s = Self { sigma, albedo, g };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(domain_err!("sigma {} must be finite and >= 0", self.sigma));
        }
        for c in self.albedo.to_array() {
            if !(0.0..=1.0).contains(&c) {
                return Err(domain_err!("albedo channel {c} outside [0, 1]"));
            }
        }
        if !(self.g.abs() < 1.0) {
            return Err(domain_err!("asymmetry {} outside (-1, 1)", self.g));
        }
        Ok(())
    }
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn cube(half_extent: f64) -> Self {
        Self::new(Vec3::splat(-half_extent), Vec3::splat(half_extent))
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb::new(self.min.min_elem(o.min), self.max.max_elem(o.max))
    }

    /// Slab test for `origin + t dir` with `t` in `[0, t_max]`; `dir` need not
    /// be normalized.
    pub fn intersect(&self, origin: Vec3, dir: Vec3, t_max: f64) -> Option<(f64, f64)> {
        let mut t0: f64 = 0.0;
        let mut t1 = t_max;
        for a in 0..3 {
            let o = origin[a];
            let d = dir[a];
            let (lo, hi) = (self.min[a], self.max[a]);
            if d == 0.0 {
                if o < lo || o > hi {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d;
            let (mut tn, mut tf) = ((lo - o) * inv, (hi - o) * inv);
            if tn > tf {
                std::mem::swap(&mut tn, &mut tf);
            }
            t0 = t0.max(tn);
            t1 = t1.min(tf);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.extent();
        if !(e.x > 0.0 && e.y > 0.0 && e.z > 0.0 && e.is_finite()) {
            return Err(domain_err!("degenerate bounds {self:?}"));
        }
        Ok(())
    }
}

/// Geometric support of a homogeneous medium within its bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Fills the bounds.
    Box,
    /// Sphere centred in the bounds.
    Sphere { radius: f64 },
}

/// Clamped fractal value noise inside a sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProceduralField {
    pub sigma_max: f64,
    pub albedo: Vec3,
    pub g: f64,
    pub radius: f64,
    #[serde(default = "default_frequency")]
    pub frequency: f64,
    #[serde(default = "default_octaves")]
    pub octaves: u32,
    #[serde(default)]
    pub seed: u64,
}

fn default_frequency() -> f64 {
    2.0
}

fn default_octaves() -> u32 {
    4
}

fn lattice_value(seed: u64, x: i64, y: i64, z: i64) -> f64 {
    let h = mix64(seed ^ mix64((x as u64) ^ mix64((y as u64) ^ mix64(z as u64))));
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn value_noise(seed: u64, p: Vec3) -> f64 {
    let fl = Vec3::new(p.x.floor(), p.y.floor(), p.z.floor());
    let f = p - fl;
    let q = |t: f64| t * t * t * (t * (t * 6.0 - 15.0) + 10.0);
    let (u, v, w) = (q(f.x), q(f.y), q(f.z));
    let (ix, iy, iz) = (fl.x as i64, fl.y as i64, fl.z as i64);
    let mut acc = 0.0;
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let wx = if dx == 1 { u } else { 1.0 - u };
                let wy = if dy == 1 { v } else { 1.0 - v };
                let wz = if dz == 1 { w } else { 1.0 - w };
                acc += wx * wy * wz * lattice_value(seed, ix + dx, iy + dy, iz + dz);
            }
        }
    }
    acc
}

impl ProceduralField {
    /// Density fraction in `[0, 1]` at a local point.
    pub fn density(&self, p: Vec3) -> f64 {
        let r = p.length();
        if r >= self.radius {
            return 0.0;
        }
        let mut n = 0.0;
        let mut amp = 0.5;
        let mut freq = self.frequency;
        for o in 0..self.octaves {
            n += amp * value_noise(self.seed.wrapping_add(o as u64), p * freq);
            amp *= 0.5;
            freq *= 2.0;
        }
        let falloff = 1.0 - r / self.radius;
        (1.6 * falloff + 0.9 * n - 0.15).clamp(0.0, 1.0)
    }
}

/// Cell-centred lattice of medium samples with trilinear reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    res: [usize; 3],
    /// `(sigma, aR, aG, aB, g)` per voxel, x fastest.
    data: Vec<f32>,
}

pub const GRID_CHANNELS: usize = 5;

impl GridField {
    pub fn new(res: [usize; 3], data: Vec<f32>) -> Result<Self> {
        if res.iter().any(|&n| n < 2) {
            return Err(domain_err!("grid resolution {res:?} must be >= 2 per axis"));
        }
        let n = res[0] * res[1] * res[2] * GRID_CHANNELS;
        if data.len() != n {
            return Err(domain_err!("grid payload has {} floats, expected {n}", data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(domain_err!("grid payload contains non-finite values"));
        }
        Ok(Self { res, data })
    }

    pub fn res(&self) -> [usize; 3] {
        self.res
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    fn voxel(&self, i: usize, j: usize, k: usize) -> &[f32] {
        let idx = ((k * self.res[1] + j) * self.res[0] + i) * GRID_CHANNELS;
        &self.data[idx..idx + GRID_CHANNELS]
    }

    pub fn max_sigma(&self) -> f64 {
        self.data
            .chunks_exact(GRID_CHANNELS)
            .map(|c| c[0] as f64)
            .fold(0.0, f64::max)
    }

    /// `uvw` in `[0, 1]^3` over the bounds.
    fn sample(&self, uvw: Vec3) -> [f64; GRID_CHANNELS] {
        let mut i0 = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let n = self.res[a];
            let mut u = (uvw[a] * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
            let r = u.round();
            if (u - r).abs() < 1e-9 {
                u = r;
            }
            let base = (u.floor() as usize).min(n - 2);
            i0[a] = base;
            frac[a] = u - base as f64;
        }
        let mut out = [0.0; GRID_CHANNELS];
        for dz in 0..2 {
            let wz = if dz == 1 { frac[2] } else { 1.0 - frac[2] };
            if wz == 0.0 {
                continue;
            }
            for dy in 0..2 {
                let wy = if dy == 1 { frac[1] } else { 1.0 - frac[1] };
                if wy == 0.0 {
                    continue;
                }
                for dx in 0..2 {
                    let wx = if dx == 1 { frac[0] } else { 1.0 - frac[0] };
                    if wx == 0.0 {
                        continue;
                    }
                    let v = self.voxel(i0[0] + dx, i0[1] + dy, i0[2] + dz);
                    let w = wx * wy * wz;
                    for c in 0..GRID_CHANNELS {
                        out[c] += w * v[c] as f64;
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FieldKind {
    Homogeneous {
        sigma: f64,
        albedo: Vec3,
        g: f64,
        shape: Shape,
    },
    Procedural(ProceduralField),
    Grid(GridField),
}

/// A participating medium in its local frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MediumField {
    pub kind: FieldKind,
    pub bounds: Aabb,
}

impl MediumField {
    pub fn homogeneous_sphere(radius: f64, sigma: f64, albedo: Vec3, g: f64) -> Result<Self> {
        MediumSample::new(sigma, albedo, g)?;
        Ok(Self {
            kind: FieldKind::Homogeneous {
                sigma,
                albedo,
                g,
                shape: Shape::Sphere { radius },
            },
            bounds: Aabb::cube(radius),
        })
    }

    pub fn homogeneous_box(bounds: Aabb, sigma: f64, albedo: Vec3, g: f64) -> Result<Self> {
        MediumSample::new(sigma, albedo, g)?;
        bounds.validate()?;
        Ok(Self {
            kind: FieldKind::Homogeneous {
                sigma,
                albedo,
                g,
                shape: Shape::Box,
            },
            bounds,
        })
    }

    pub fn procedural(p: ProceduralField) -> Result<Self> {
        MediumSample::new(p.sigma_max, p.albedo, p.g)?;
        Ok(Self {
            kind: FieldKind::Procedural(p),
            bounds: Aabb::cube(p.radius),
        })
    }

    pub fn grid(grid: GridField, bounds: Aabb) -> Result<Self> {
        bounds.validate()?;
        Ok(Self {
            kind: FieldKind::Grid(grid),
            bounds,
        })
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self.kind, FieldKind::Homogeneous { .. })
    }

    /// Upper bound on sigma anywhere in the field.
    pub fn majorant(&self) -> f64 {
        match &self.kind {
            FieldKind::Homogeneous { sigma, .. } => *sigma,
            FieldKind::Procedural(p) => p.sigma_max,
            FieldKind::Grid(g) => g.max_sigma(),
        }
    }

    /// Properties at a local-space point; vacuum outside the support.
    pub fn sample_local(&self, p: Vec3) -> MediumSample {
        if !self.bounds.contains(p) {
            return MediumSample::VACUUM;
        }
        match &self.kind {
            FieldKind::Homogeneous {
                sigma,
                albedo,
                g,
                shape,
            } => {
                let inside = match shape {
                    Shape::Box => true,
                    Shape::Sphere { radius } => (p - self.bounds.center()).length_squared() <= radius * radius,
                };
                if inside {
                    MediumSample {
                        sigma: *sigma,
                        albedo: *albedo,
                        g: *g,
                    }
                } else {
                    MediumSample::VACUUM
                }
            }
            FieldKind::Procedural(f) => {
                let d = f.density(p - self.bounds.center());
                MediumSample {
                    sigma: f.sigma_max * d,
                    albedo: f.albedo,
                    g: f.g,
                }
            }
            FieldKind::Grid(grid) => {
                let e = self.bounds.extent();
                let q = p - self.bounds.min;
                let v = grid.sample(Vec3::new(q.x / e.x, q.y / e.y, q.z / e.z));
                MediumSample {
                    sigma: v[0].max(0.0),
                    albedo: Vec3::new(v[1], v[2], v[3]),
                    g: v[4],
                }
            }
        }
    }

    /// Parameter interval where a local ray can see non-zero density.
    pub fn support_interval(&self, origin: Vec3, dir: Vec3, t_max: f64) -> Option<(f64, f64)> {
        if let FieldKind::Homogeneous {
            shape: Shape::Sphere { radius },
            ..
        } = self.kind
        {
            let oc = origin - self.bounds.center();
            let a = dir.length_squared();
            let b = oc.dot(dir);
            let c = oc.length_squared() - radius * radius;
            let disc = b * b - a * c;
            if disc <= 0.0 {
                return None;
            }
            let sq = disc.sqrt();
            let t0 = ((-b - sq) / a).max(0.0);
            let t1 = ((-b + sq) / a).min(t_max);
            return (t0 < t1).then_some((t0, t1));
        }
        self.bounds.intersect(origin, dir, t_max)
    }
}
