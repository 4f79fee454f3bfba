use serde::{Deserialize, Serialize};

use crate::error::{domain_err, Result};
use crate::mathkit::Vec3;

/// Rigid placement with uniform scale: `world = scale * R * local + translation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    #[serde(default)]
    pub translation: Vec3,
    /// Row-major rotation matrix.
    #[serde(default = "identity3")]
    pub rotation: [[f64; 3]; 3],
    #[serde(default = "one")]
    pub scale: f64,
}

fn identity3() -> [[f64; 3]; 3] {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

fn one() -> f64 {
    1.0
}

impl Default for Transform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        translation: Vec3::ZERO,
        rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        scale: 1.0,
    };

    pub fn translate(t: Vec3) -> Self {
        Self {
            translation: t,
            ..Self::IDENTITY
        }
    }

    pub fn with_scale(mut self, s: f64) -> Self {
        self.scale = s;
        self
    }

    /// Rotation about +z by `deg` degrees.
    pub fn rotate_z_deg(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Self {
            rotation: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
            ..Self::IDENTITY
        }
    }

    /// Checks scale > 0 and an orthonormal rotation with det +1.
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(domain_err!("transform scale {} must be positive", self.scale));
        }
        if !self.translation.is_finite() {
            return Err(domain_err!("transform translation not finite"));
        }
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                if (dot - e).abs() > 1e-6 {
                    return Err(domain_err!("transform rotation is not orthonormal"));
                }
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        if (det - 1.0).abs() > 1e-6 {
            return Err(domain_err!("transform rotation has determinant {det}"));
        }
        Ok(())
    }

    fn rotate(&self, v: Vec3) -> Vec3 {
        let r = &self.rotation;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }

    fn rotate_inv(&self, v: Vec3) -> Vec3 {
        let r = &self.rotation;
        Vec3::new(
            r[0][0] * v.x + r[1][0] * v.y + r[2][0] * v.z,
            r[0][1] * v.x + r[1][1] * v.y + r[2][1] * v.z,
            r[0][2] * v.x + r[1][2] * v.y + r[2][2] * v.z,
        )
    }

    pub fn apply_point(&self, p: Vec3) -> Vec3 {
        self.rotate(p) * self.scale + self.translation
    }

    pub fn inverse_point(&self, p: Vec3) -> Vec3 {
        self.rotate_inv(p - self.translation) / self.scale
    }

    /// Maps a world-space vector to local space. The ray parameter is
    /// preserved when the mapped direction is left unnormalized.
    pub fn inverse_vector(&self, v: Vec3) -> Vec3 {
        self.rotate_inv(v) / self.scale
    }

    /// `self ∘ inner`: apply `inner` first.
    pub fn compose(&self, inner: &Transform) -> Transform {
        let a = &self.rotation;
        let b = &inner.rotation;
        let mut rot = [[0.0; 3]; 3];
        for (i, row) in rot.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        Transform {
            translation: self.apply_point(inner.translation),
            rotation: rot,
            scale: self.scale * inner.scale,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_and_compose() {
        let a = Transform::rotate_z_deg(30.0).compose(&Transform::translate(Vec3::new(1.0, 2.0, 3.0))).with_scale(2.0);
        let b = Transform::translate(Vec3::new(-0.5, 0.0, 1.0));
        let p = Vec3::new(0.3, -0.7, 0.2);
        let q = a.apply_point(p);
        assert!((a.inverse_point(q) - p).length() < 1e-12);
        let ab = a.compose(&b);
        assert!((ab.apply_point(p) - a.apply_point(b.apply_point(p))).length() < 1e-12);
        assert!(ab.validate().is_ok());
        assert!(Transform::IDENTITY.with_scale(0.0).validate().is_err());
    }
}
