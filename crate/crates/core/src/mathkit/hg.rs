//! Henyey–Greenstein phase function.
//!
//! Both arguments point away from the scattering point, so forward
//! scattering (`g > 0`) peaks at `cos = -1` and the denominator carries
//! `+2 g cos`.

use std::f64::consts::PI;

use super::vec3::{Direction, Vec3};
use crate::error::{domain_err, Result};

const INV_4PI: f64 = 1.0 / (4.0 * PI);

/// Below this magnitude the isotropic inverse CDF is used for sampling.
const ISOTROPIC_EPS: f64 = 1e-5;

fn check_g(g: f64) -> Result<()> {
    if !(g.abs() < 1.0) {
        return Err(domain_err!("asymmetry g = {g} outside (-1, 1)"));
    }
    Ok(())
}

/// Phase function value for a given cosine between the two directions.
#[inline]
pub fn hg_cos(cos_theta: f64, g: f64) -> f64 {
    let denom = 1.0 + g * g + 2.0 * g * cos_theta;
    INV_4PI * (1.0 - g * g) / (denom * denom.sqrt())
}

/// Derivative of [`hg_cos`] with respect to `g`.
#[inline]
pub fn hg_cos_dg(cos_theta: f64, g: f64) -> f64 {
    let denom = 1.0 + g * g + 2.0 * g * cos_theta;
    let d32 = denom * denom.sqrt();
    INV_4PI * (-2.0 * g / d32 - 1.5 * (1.0 - g * g) * (2.0 * g + 2.0 * cos_theta) / (d32 * denom))
}

/// Evaluates the phase function for `w_o`, `w_i`.
pub fn hg_eval(w_o: Direction, w_i: Direction, g: f64) -> Result<f64> {
    check_g(g)?;
    Ok(hg_cos(w_o.dot(w_i), g))
}

/// Importance-samples an incident direction for `w_o`.
///
/// Inverse CDF in the cosine, uniform azimuth. The returned pdf (per solid
/// angle) equals the phase function value of the returned pair.
pub fn hg_sample(w_o: Direction, g: f64, u1: f64, u2: f64) -> Result<(Direction, f64)> {
    check_g(g)?;
    let cos_theta = if g.abs() < ISOTROPIC_EPS {
        1.0 - 2.0 * u1
    } else {
        let s = (1.0 - g * g) / (1.0 + g - 2.0 * g * u1);
        ((s * s - 1.0 - g * g) / (2.0 * g)).clamp(-1.0, 1.0)
    };
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    let phi = 2.0 * PI * u2;
    let (t, b) = w_o.basis();
    let v: Vec3 = t * (sin_theta * phi.cos()) + b * (sin_theta * phi.sin()) + w_o.vec() * cos_theta;
    let w_i = Direction::new_unchecked(v.normalized());
    Ok((w_i, hg_cos(w_o.dot(w_i), g)))
}
