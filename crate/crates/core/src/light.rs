//! Light conditions: one white point light plus an optional environment.

use serde::{Deserialize, Serialize};

use crate::error::{domain_err, Result};
use crate::mathkit::sh::{sh_basis_into, sh_count, ShCoefficients};
use crate::mathkit::{Direction, Vec3};

/// Point-light position, radiant intensity and environment indicator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightCondition {
    pub position: Vec3,
    pub intensity: f64,
    #[serde(default)]
    pub env: bool,
}

impl LightCondition {
    pub fn point(position: Vec3, intensity: f64) -> Self {
        Self {
            position,
            intensity,
            env: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.is_finite() {
            return Err(domain_err!("light position {:?} not finite", self.position));
        }
        if !(self.intensity >= 0.0 && self.intensity.is_finite()) {
            return Err(domain_err!("light intensity {} must be finite and >= 0", self.intensity));
        }
        Ok(())
    }
}

/// Low-frequency analytic sky given as a clamped band-1 SH expansion.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvLight {
    coeffs: ShCoefficients,
}

/// Default sky: bluish, brighter towards +z, non-negative everywhere.
pub const DEFAULT_ENV_COEFFS: [[f64; 3]; 4] = [
    [1.0, 1.1, 1.3],
    [0.0, 0.0, 0.0],
    [0.4, 0.45, 0.55],
    [0.0, 0.0, 0.0],
];

impl Default for EnvLight {
    fn default() -> Self {
        Self::from_coeffs(DEFAULT_ENV_COEFFS)
    }
}

impl EnvLight {
    pub fn from_coeffs(c: [[f64; 3]; 4]) -> Self {
        Self {
            coeffs: ShCoefficients::from_vec(1, c.to_vec()).expect("band-1 layout"),
        }
    }

    pub fn coeffs(&self) -> [[f64; 3]; 4] {
        let c = self.coeffs.coeffs();
        [c[0], c[1], c[2], c[3]]
    }

    /// Radiance arriving from direction `w` (pointing towards the sky).
    pub fn radiance(&self, w: Direction) -> Vec3 {
        let mut y = [0.0; sh_count(1)];
        sh_basis_into(1, w.vec(), &mut y);
        let v = self.coeffs.eval_with_basis(&y);
        Vec3::new(v.x.max(0.0), v.y.max(0.0), v.z.max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sky_is_positive() {
        let env = EnvLight::default();
        for (i, j) in (0..10).flat_map(|i| (0..10).map(move |j| (i, j))) {
            let d = crate::mathkit::sampling::uniform_sphere((i as f64 + 0.5) / 10.0, j as f64 / 10.0);
            let r = env.radiance(d);
            assert!(r.x > 0.0 && r.y > 0.0 && r.z > 0.0);
        }
    }

    #[test]
    fn validates_intensity() {
        assert!(LightCondition::point(Vec3::ZERO, -1.0).validate().is_err());
        assert!(LightCondition::point(Vec3::new(f64::NAN, 0.0, 0.0), 1.0).validate().is_err());
        assert!(LightCondition::point(Vec3::ZERO, 10.0).validate().is_ok());
    }
}
