//! Per-point scattering estimates and per-ray compositing, with their
//! hand-derived reverse passes.
//!
//! A point's single-scattering radiance is `a * X_s` and its multiple
//! scattering radiance `a * X_m`, where
//!
//! * `X_s = rho(w_o, w_L) I / d^2 V_L + (4 pi / E) sum_e rho_e L_env(w_e) V_e`
//! * `X_m = (s / K) sum_k rho_k max(0, c . Y(w_k))` with `s = 4 pi` (or 1 in
//!   the literal mode).
//!
//! Along a ray with stratum width `dt`, `alpha_j = 1 - exp(-sigma_j dt)`,
//! `tau_j = exp(-dt sum_{i<j} sigma_i)`, and the background is weighted by
//! the transmittance left after the last sample.

use std::f64::consts::PI;

use crate::error::{domain_err, Result};
use crate::light::{EnvLight, LightCondition};
use crate::mathkit::hg::{hg_cos, hg_cos_dg};
use crate::mathkit::sh::sh_basis_into;
use crate::mathkit::{sample_sphere, Direction, RngStream, SphereSampling, Vec3};
use crate::media::MediumSample;

/// Directions and light data shared by every point of a batch.
#[derive(Clone, Debug)]
pub struct ShadingContext {
    pub light: LightCondition,
    /// Stratified environment directions, used when `light.env` is set.
    pub env_dirs: Vec<Direction>,
    pub env_radiance: Vec<Vec3>,
    /// Uniform directions for the SH integral.
    pub sh_dirs: Vec<Direction>,
    /// `K x n` basis values, row per direction.
    pub sh_basis: Vec<f64>,
    /// SH coefficients per channel (0 without an SH field).
    pub n_coeffs: usize,
    /// Solid-angle factor of the SH estimator.
    pub mc_scale: f64,
}

impl ShadingContext {
    /// Draws `k_dirs` uniform SH directions and, for environment lights,
    /// `env_dirs` stratified shadow directions. Directions are drawn even
    /// when unused so random streams do not depend on the model.
    pub fn sample(
        light: &LightCondition,
        env: &EnvLight,
        k_dirs: usize,
        env_dirs: usize,
        l_max: Option<usize>,
        strict: bool,
        rng: &mut RngStream,
    ) -> Result<Self> {
        light.validate()?;
        if k_dirs == 0 || env_dirs == 0 {
            return Err(domain_err!("direction counts must be >= 1"));
        }
        let sh_dirs: Vec<Direction> = sample_sphere(SphereSampling::Uniform, k_dirs, rng)?.into_iter().map(|d| d.0).collect();
        let env_dirs: Vec<Direction> = sample_sphere(SphereSampling::Stratified, env_dirs, rng)?.into_iter().map(|d| d.0).collect();
        let n_coeffs = l_max.map_or(0, crate::mathkit::sh::sh_count);
        let mut sh_basis = vec![0.0; k_dirs * n_coeffs];
        if n_coeffs > 0 {
            for (k, d) in sh_dirs.iter().enumerate() {
                sh_basis_into(l_max.unwrap_or(0), d.vec(), &mut sh_basis[k * n_coeffs..(k + 1) * n_coeffs]);
            }
        }
        Ok(Self {
            light: *light,
            env_radiance: env_dirs.iter().map(|&d| env.radiance(d)).collect(),
            env_dirs,
            sh_dirs,
            sh_basis,
            n_coeffs,
            mc_scale: if strict { 1.0 } else { 4.0 * PI },
        })
    }

    /// The same directions under another light condition.
    pub fn for_light(&self, light: &LightCondition) -> Self {
        Self {
            light: *light,
            ..self.clone()
        }
    }

    /// Environment directions in effect (none without environment light).
    pub fn active_env(&self) -> &[Direction] {
        if self.light.env {
            &self.env_dirs
        } else {
            &[]
        }
    }

    /// Direction and distance from `p` to the point light, if it is lit.
    pub fn light_dir(&self, p: Vec3) -> Option<(Direction, f64)> {
        let v = self.light.position - p;
        let d = v.length();
        (self.light.intensity > 0.0 && d > 0.0).then(|| (Direction::new_unchecked(v / d), d))
    }
}

/// Unalbedoed single- and multiple-scattering estimates at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PointShade {
    pub single: Vec3,
    pub multi: Vec3,
}

/// Inputs of one point.
#[derive(Clone, Copy, Debug)]
pub struct PointInput<'a> {
    pub p: Vec3,
    /// Towards the camera.
    pub w_o: Vec3,
    pub g: f64,
    /// `3n` channel-major coefficients (empty without an SH field).
    pub coeffs: &'a [f64],
    pub vis_light: f64,
    pub vis_env: &'a [f64],
}

pub fn shade_point(ctx: &ShadingContext, x: &PointInput) -> PointShade {
    shade_point_signed(ctx, x).0
}

/// [`shade_point`] plus a fingerprint of which clamped SH evaluations
/// were positive.
pub fn shade_point_signed(ctx: &ShadingContext, x: &PointInput) -> (PointShade, u64) {
    let mut sig: u64 = 0;
    let mut single = Vec3::ZERO;
    if let Some((wl, d)) = ctx.light_dir(x.p) {
        let rho = hg_cos(x.w_o.dot(wl.vec()), x.g);
        single += Vec3::splat(rho * ctx.light.intensity / (d * d) * x.vis_light);
    }
    let env = ctx.active_env();
    if !env.is_empty() {
        let mut e = Vec3::ZERO;
        for ((w, l), v) in env.iter().zip(&ctx.env_radiance).zip(x.vis_env) {
            e += *l * (hg_cos(x.w_o.dot(w.vec()), x.g) * v);
        }
        single += e * (4.0 * PI / env.len() as f64);
    }
    let n = ctx.n_coeffs;
    let mut multi = [0.0; 3];
    if n > 0 && !x.coeffs.is_empty() {
        for (k, w) in ctx.sh_dirs.iter().enumerate() {
            let y = &ctx.sh_basis[k * n..(k + 1) * n];
            let rho = hg_cos(x.w_o.dot(w.vec()), x.g);
            for (c, m) in multi.iter_mut().enumerate() {
                let r: f64 = x.coeffs[c * n..(c + 1) * n].iter().zip(y).map(|(a, b)| a * b).sum();
                sig = (sig ^ u64::from(r > 0.0)).wrapping_mul(0x0100_0000_01b3);
                if r > 0.0 {
                    *m += rho * r;
                }
            }
        }
    }
    let s = ctx.mc_scale / ctx.sh_dirs.len() as f64;
    (
        PointShade {
            single,
            multi: Vec3::from(multi) * s,
        },
        sig,
    )
}

/// Reverse of [`shade_point`]. Given the objective's gradients with respect
/// to `single` and `multi`, returns the gradient with respect to `g` and
/// accumulates coefficient gradients into `d_coeffs`. Also returns a
/// fingerprint of the clamp pattern.
pub fn shade_point_grad(ctx: &ShadingContext, x: &PointInput, d_single: Vec3, d_multi: Vec3, d_coeffs: &mut [f64]) -> (f64, u64) {
    let mut dg = 0.0;
    if let Some((wl, d)) = ctx.light_dir(x.p) {
        let drho = hg_cos_dg(x.w_o.dot(wl.vec()), x.g);
        dg += (d_single.x + d_single.y + d_single.z) * drho * ctx.light.intensity / (d * d) * x.vis_light;
    }
    let env = ctx.active_env();
    if !env.is_empty() {
        let s = 4.0 * PI / env.len() as f64;
        for ((w, l), v) in env.iter().zip(&ctx.env_radiance).zip(x.vis_env) {
            dg += s * hg_cos_dg(x.w_o.dot(w.vec()), x.g) * v * d_single.dot(*l);
        }
    }
    let n = ctx.n_coeffs;
    let mut sig: u64 = 0;
    if n > 0 && !x.coeffs.is_empty() {
        let s = ctx.mc_scale / ctx.sh_dirs.len() as f64;
        let dm = d_multi.to_array();
        for (k, w) in ctx.sh_dirs.iter().enumerate() {
            let y = &ctx.sh_basis[k * n..(k + 1) * n];
            let cos = x.w_o.dot(w.vec());
            let rho = hg_cos(cos, x.g);
            let drho = hg_cos_dg(cos, x.g);
            for c in 0..3 {
                let r: f64 = x.coeffs[c * n..(c + 1) * n].iter().zip(y).map(|(a, b)| a * b).sum();
                sig = (sig ^ u64::from(r > 0.0)).wrapping_mul(0x0100_0000_01b3);
                if r > 0.0 {
                    dg += s * dm[c] * drho * r;
                    let f = s * dm[c] * rho;
                    for (o, b) in d_coeffs[c * n..(c + 1) * n].iter_mut().zip(y) {
                        *o += f * b;
                    }
                }
            }
        }
    }
    (dg, sig)
}

/// Gradient of the objective with respect to the shadow visibilities of
/// one point, given its gradient with respect to `single`. Writes the light
/// entry (when lit) followed by one entry per active environment direction.
pub fn shade_point_vis_grad(ctx: &ShadingContext, x: &PointInput, d_single: Vec3, d_vis: &mut [f64]) {
    let mut k = 0;
    if let Some((wl, d)) = ctx.light_dir(x.p) {
        let rho = hg_cos(x.w_o.dot(wl.vec()), x.g);
        d_vis[0] = (d_single.x + d_single.y + d_single.z) * rho * ctx.light.intensity / (d * d);
        k = 1;
    }
    let env = ctx.active_env();
    if !env.is_empty() {
        let s = 4.0 * PI / env.len() as f64;
        for (j, (w, l)) in env.iter().zip(&ctx.env_radiance).enumerate() {
            d_vis[k + j] = s * hg_cos(x.w_o.dot(w.vec()), x.g) * d_single.dot(*l);
        }
    }
}

/// Radiance of one ray split into layers.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RayRadiance {
    pub direct: Vec3,
    pub indirect: Vec3,
}

impl RayRadiance {
    pub fn total(&self) -> Vec3 {
        self.direct + self.indirect
    }
}

/// Compositing weights `tau_j alpha_j` and the residual transmittance.
pub fn composite_weights(sigma: &[f64], dt: f64) -> (Vec<f64>, f64) {
    let mut t = 1.0;
    let mut w = Vec::with_capacity(sigma.len());
    for &s in sigma {
        let next = t * (-s * dt).exp();
        w.push(t - next);
        t = next;
    }
    (w, t)
}

/// Composites per-point radiance (already multiplied by albedo).
pub fn composite(sigma: &[f64], dt: f64, single: &[Vec3], multi: &[Vec3], background: Vec3) -> RayRadiance {
    let (w, t_end) = composite_weights(sigma, dt);
    let mut out = RayRadiance {
        direct: background * t_end,
        indirect: Vec3::ZERO,
    };
    for j in 0..sigma.len() {
        out.direct += single[j] * w[j];
        out.indirect += multi[j] * w[j];
    }
    out
}

/// Reverse of [`composite`] for an objective with gradient `d_total` with
/// respect to the total radiance. Returns `d sigma_j` and the weights
/// (the gradient with respect to each point's radiance is
/// `d_total * w_j`).
pub fn composite_grad(sigma: &[f64], dt: f64, radiance: &[Vec3], background: Vec3, d_total: Vec3) -> (Vec<f64>, Vec<f64>) {
    let (w, t_end) = composite_weights(sigma, dt);
    let n = sigma.len();
    let mut d_sigma = vec![0.0; n];
    // tail = sum_{k>j} w_k S_k + background T_end
    let mut tail = background * t_end;
    let mut t_next = t_end;
    for j in (0..n).rev() {
        let v = radiance[j] * t_next - tail;
        d_sigma[j] = dt * d_total.dot(v);
        tail += radiance[j] * w[j];
        t_next += w[j];
    }
    (d_sigma, w)
}

/// Convenience for callers holding a [`MediumSample`] per point.
pub fn albedo_weighted(m: &MediumSample, s: &PointShade) -> (Vec3, Vec3) {
    (m.albedo.mul_elem(s.single), m.albedo.mul_elem(s.multi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx(strict: bool, env: bool) -> ShadingContext {
        let l = LightCondition {
            env,
            ..LightCondition::point(Vec3::new(0.0, 3.0, 0.0), 4.0 * PI * 9.0)
        };
        ShadingContext::sample(&l, &EnvLight::default(), 64, 16, Some(2), strict, &mut RngStream::new(1, 2)).unwrap()
    }

    #[test]
    fn isotropic_unit_shadow_ray() {
        // I = 4 pi d^2, g = 0, V = 1: the phase 1/(4 pi) cancels.
        let c = ctx(false, false);
        let x = PointInput {
            p: Vec3::ZERO,
            w_o: Vec3::new(0.0, 0.0, 1.0),
            g: 0.0,
            coeffs: &[],
            vis_light: 1.0,
            vis_env: &[],
        };
        let s = shade_point(&c, &x);
        assert!((s.single - Vec3::ONE).length() < 1e-12);
        assert_eq!(s.multi, Vec3::ZERO);
    }

    #[test]
    fn constant_sh_reduces_to_dc_term() {
        let c = ctx(false, false);
        let mut coeffs = vec![0.0; 27];
        coeffs[0] = 2.0;
        coeffs[9] = 2.0;
        coeffs[18] = 2.0;
        let x = PointInput {
            p: Vec3::ZERO,
            w_o: Vec3::new(0.0, 0.0, 1.0),
            g: 0.0,
            coeffs: &coeffs,
            vis_light: 0.0,
            vis_env: &[],
        };
        let s = shade_point(&c, &x);
        let expect = 0.282_094_791_773_878_1 * 2.0;
        assert!((s.multi.x - expect).abs() < 1e-12, "{}", s.multi.x);
        let strict = shade_point(&ctx(true, false), &x);
        assert!((strict.multi.x * 4.0 * PI - expect).abs() < 1e-12);
    }

    #[test]
    fn composite_vacuum_and_opaque() {
        let bg = Vec3::new(0.1, 0.2, 0.3);
        let r = composite(&[0.0; 4], 0.5, &[Vec3::ONE; 4], &[Vec3::ONE; 4], bg);
        assert_eq!(r.direct, bg);
        assert_eq!(r.indirect, Vec3::ZERO);
        let (w, t) = composite_weights(&[1e6, 1.0], 0.1);
        assert_eq!(w[0], 1.0);
        assert_eq!(t, 0.0);
    }

    fn finite_diff_check(sigma: Vec<f64>, dt: f64) {
        let rad: Vec<Vec3> = (0..sigma.len()).map(|i| Vec3::new(1.0 + i as f64, 0.5, 2.0 - 0.1 * i as f64)).collect();
        let bg = Vec3::new(0.3, 0.7, 0.1);
        let up = Vec3::new(0.9, -0.4, 0.2);
        let f = |s: &[f64]| up.dot(composite(s, dt, &rad, &vec![Vec3::ZERO; s.len()], bg).total());
        let (ds, w) = composite_grad(&sigma, dt, &rad, bg, up);
        for j in 0..sigma.len() {
            let h = 1e-6;
            let mut a = sigma.clone();
            a[j] += h;
            let mut b = sigma.clone();
            b[j] -= h;
            let num = (f(&a) - f(&b)) / (2.0 * h);
            assert!((num - ds[j]).abs() < 1e-6 * (1.0 + num.abs()), "{j}: {num} vs {}", ds[j]);
        }
        assert!(w.iter().sum::<f64>() <= 1.0 + 1e-12);
    }

    #[test]
    fn composite_gradient_matches_differences() {
        finite_diff_check(vec![0.3, 2.0, 0.0, 5.0, 1.2], 0.2);
    }

    #[test]
    fn shading_gradient_matches_differences() {
        let c = ctx(false, true);
        let coeffs: Vec<f64> = (0..27).map(|i| ((i * 7) as f64 * 0.37).sin()).collect();
        let vis_env: Vec<f64> = (0..16).map(|i| 0.2 + 0.05 * i as f64).collect();
        let ds = Vec3::new(0.3, -0.7, 1.1);
        let dm = Vec3::new(-0.2, 0.5, 0.8);
        let make = |g: f64, co: &[f64]| {
            let x = PointInput {
                p: Vec3::new(0.2, -0.1, 0.3),
                w_o: Vec3::new(0.6, 0.0, 0.8),
                g,
                coeffs: co,
                vis_light: 0.7,
                vis_env: &vis_env,
            };
            let s = shade_point(&c, &x);
            ds.dot(s.single) + dm.dot(s.multi)
        };
        let x = PointInput {
            p: Vec3::new(0.2, -0.1, 0.3),
            w_o: Vec3::new(0.6, 0.0, 0.8),
            g: 0.35,
            coeffs: &coeffs,
            vis_light: 0.7,
            vis_env: &vis_env,
        };
        let mut dc = vec![0.0; 27];
        let (dg, _) = shade_point_grad(&c, &x, ds, dm, &mut dc);
        let h = 1e-6;
        let num = (make(0.35 + h, &coeffs) - make(0.35 - h, &coeffs)) / (2.0 * h);
        assert!((num - dg).abs() < 1e-6 * (1.0 + num.abs()), "{num} {dg}");
        for i in [0, 5, 13, 26] {
            let mut a = coeffs.clone();
            a[i] += h;
            let mut b = coeffs.clone();
            b[i] -= h;
            let num = (make(0.35, &a) - make(0.35, &b)) / (2.0 * h);
            assert!((num - dc[i]).abs() < 1e-6 * (1.0 + num.abs()), "{i}: {num} {}", dc[i]);
        }
    }

    proptest! {
        #[test]
        fn weights_bounded(sigma in proptest::collection::vec(0.0f64..50.0, 1..64), dt in 0.001f64..0.5) {
            let (w, t) = composite_weights(&sigma, dt);
            let s: f64 = w.iter().sum();
            prop_assert!(s <= 1.0 + 1e-5);
            prop_assert!((s + t - 1.0).abs() < 1e-9);
            prop_assert!(w.iter().all(|&x| x >= 0.0));
        }
    }
}
