//! Pinhole camera looking down its local -z axis.

use serde::{Deserialize, Serialize};

use crate::error::{domain_err, Result};
use crate::mathkit::{Direction, Vec3};
use crate::media::Ray;

/// Camera-to-world placement (3x4, rotation columns = right, up, back),
/// vertical field of view and resolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub camera_to_world: [[f64; 4]; 3],
    pub fov_y_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_y_deg: f64, width: usize, height: usize) -> Result<Self> {
        let back = eye - target;
        if back.length() == 0.0 {
            return Err(domain_err!("camera eye coincides with target"));
        }
        let back = back.normalized();
        let right = up.cross(back);
        if right.length() < 1e-9 {
            return Err(domain_err!("camera up vector is parallel to the view direction"));
        }
        let right = right.normalized();
        let true_up = back.cross(right);
        let cam = Self {
            camera_to_world: [
                [right.x, true_up.x, back.x, eye.x],
                [right.y, true_up.y, back.y, eye.y],
                [right.z, true_up.z, back.z, eye.z],
            ],
            fov_y_deg,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(domain_err!("camera resolution {}x{} is empty", self.width, self.height));
        }
        if !(self.fov_y_deg > 0.0 && self.fov_y_deg < 180.0) {
            return Err(domain_err!("field of view {} outside (0, 180)", self.fov_y_deg));
        }
        let m = &self.camera_to_world;
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| m[k][i] * m[k][j]).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                if (d - e).abs() > 1e-6 {
                    return Err(domain_err!("camera rotation is not orthonormal"));
                }
            }
        }
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(domain_err!("camera transform not finite"));
        }
        Ok(())
    }

    pub fn eye(&self) -> Vec3 {
        let m = &self.camera_to_world;
        Vec3::new(m[0][3], m[1][3], m[2][3])
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Ray through the centre of pixel `(x, y)`, row 0 at the top.
    pub fn ray(&self, x: usize, y: usize) -> Ray {
        let t = (0.5 * self.fov_y_deg.to_radians()).tan();
        let aspect = self.width as f64 / self.height as f64;
        let u = (2.0 * (x as f64 + 0.5) / self.width as f64 - 1.0) * t * aspect;
        let v = (1.0 - 2.0 * (y as f64 + 0.5) / self.height as f64) * t;
        let m = &self.camera_to_world;
        let d = Vec3::new(
            m[0][0] * u + m[0][1] * v - m[0][2],
            m[1][0] * u + m[1][1] * v - m[1][2],
            m[2][0] * u + m[2][1] * v - m[2][2],
        );
        Ray::new(self.eye(), Direction::new_unchecked(d.normalized()))
    }

    /// Ray for a flat pixel index.
    pub fn ray_index(&self, i: usize) -> Ray {
        self.ray(i % self.width, i / self.width)
    }

    pub fn with_resolution(mut self, width: usize, height: usize) -> Self {
        self.width = width;
        self.height = height;
        self
    }
}
