use std::f64::consts::PI;

use super::rng::RngStream;
use super::vec3::{Direction, Vec3};
use crate::error::{domain_err, Result};

pub const UNIFORM_SPHERE_PDF: f64 = 1.0 / (4.0 * PI);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SphereSampling {
    Uniform,
    /// Jittered equal-area `(z, phi)` grid.
    Stratified,
}

/// Area-preserving map from the unit square: `z = 1 - 2 u1`, `phi = 2 pi u2`.
pub fn uniform_sphere(u1: f64, u2: f64) -> Direction {
    let z = 1.0 - 2.0 * u1;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = 2.0 * PI * u2;
    Direction::new_unchecked(Vec3::new(r * phi.cos(), r * phi.sin(), z))
}

/// Rows x columns factoring of `n` used by stratified sampling: the largest
/// divisor not exceeding `sqrt(n)` gives the rows.
pub fn strata_shape(n: usize) -> (usize, usize) {
    let mut rows = (n as f64).sqrt().floor() as usize;
    while rows > 1 && n % rows != 0 {
        rows -= 1;
    }
    let rows = rows.max(1);
    (rows, n / rows)
}

/// `n` sphere directions, each with pdf `1/(4 pi)`.
pub fn sample_sphere(mode: SphereSampling, n: usize, rng: &mut RngStream) -> Result<Vec<(Direction, f64)>> {
    if n == 0 {
        return Err(domain_err!("sample_sphere needs n >= 1"));
    }
    let mut out = Vec::with_capacity(n);
    match mode {
        SphereSampling::Uniform => {
            for _ in 0..n {
                out.push((uniform_sphere(rng.uniform(), rng.uniform()), UNIFORM_SPHERE_PDF));
            }
        }
        SphereSampling::Stratified => {
            let (rows, cols) = strata_shape(n);
            for i in 0..rows {
                for j in 0..cols {
                    let u1 = (i as f64 + rng.uniform()) / rows as f64;
                    let u2 = (j as f64 + rng.uniform()) / cols as f64;
                    out.push((uniform_sphere(u1, u2), UNIFORM_SPHERE_PDF));
                }
            }
        }
    }
    Ok(out)
}
