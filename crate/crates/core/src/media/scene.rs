use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{domain_err, Result};
use crate::light::{EnvLight, LightCondition};
use crate::mathkit::{Direction, Vec3};

use super::field::{Aabb, MediumField, MediumSample};
use super::transform::Transform;

/// A ray `origin + t dir`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Direction,
}

impl Ray {
    pub fn new(origin: Vec3, dir: Direction) -> Self {
        Self { origin, dir }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir.vec() * t
    }
}

/// A placed medium.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub field: Arc<MediumField>,
    pub transform: Transform,
}

impl Instance {
    pub fn new(field: MediumField, transform: Transform) -> Self {
        Self {
            field: Arc::new(field),
            transform,
        }
    }

    /// World-space bounding box of the transformed local bounds.
    pub fn world_bounds(&self) -> Aabb {
        let b = self.field.bounds;
        let mut out: Option<Aabb> = None;
        for i in 0..8 {
            let c = Vec3::new(
                if i & 1 == 0 { b.min.x } else { b.max.x },
                if i & 2 == 0 { b.min.y } else { b.max.y },
                if i & 4 == 0 { b.min.z } else { b.max.z },
            );
            let w = self.transform.apply_point(c);
            let pt = Aabb::new(w, w);
            out = Some(out.map_or(pt, |o| o.union(&pt)));
        }
        out.expect("eight corners")
    }

    fn local_ray(&self, ray: &Ray) -> (Vec3, Vec3) {
        (
            self.transform.inverse_point(ray.origin),
            self.transform.inverse_vector(ray.dir.vec()),
        )
    }

    /// Interval of the world ray over which this instance may have density.
    pub fn support_interval(&self, ray: &Ray, t_max: f64) -> Option<(f64, f64)> {
        let (o, d) = self.local_ray(ray);
        self.field.support_interval(o, d, t_max)
    }

    /// Tight interval of the world ray against the instance's bounding box.
    pub fn box_interval(&self, ray: &Ray, t_max: f64) -> Option<(f64, f64)> {
        let (o, d) = self.local_ray(ray);
        self.field.bounds.intersect(o, d, t_max)
    }

    pub fn sample(&self, p: Vec3) -> MediumSample {
        self.field.sample_local(self.transform.inverse_point(p))
    }
}

/// One piece of a ray over which the set of overlapping instances is fixed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackingSegment {
    pub t0: f64,
    pub t1: f64,
    /// Sum of instance majorants active over the segment.
    pub majorant: f64,
    /// True when every active instance is homogeneous, i.e. sigma equals the
    /// majorant everywhere on the segment.
    pub exact: bool,
}

/// Scene of participating media plus lights.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneDescription {
    pub instances: Vec<Instance>,
    /// Radiance seen by camera rays that leave the scene; does not illuminate.
    pub background: Vec3,
    pub lights: BTreeMap<String, LightCondition>,
    pub env: EnvLight,
}

impl SceneDescription {
    pub fn new(instances: Vec<Instance>) -> Result<Self> {
        let s = Self {
            instances,
            background: Vec3::ZERO,
            lights: BTreeMap::new(),
            env: EnvLight::default(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn single(field: MediumField) -> Result<Self> {
        Self::new(vec![Instance::new(field, Transform::IDENTITY)])
    }

    pub fn with_light(mut self, name: &str, light: LightCondition) -> Self {
        self.lights.insert(name.to_string(), light);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.instances.is_empty() {
            return Err(domain_err!("scene needs at least one instance"));
        }
        for inst in &self.instances {
            inst.transform.validate()?;
            inst.field.bounds.validate()?;
        }
        for l in self.lights.values() {
            l.validate()?;
        }
        Ok(())
    }

    /// World-space union of the instance boxes.
    pub fn bounds(&self) -> Aabb {
        self.instances
            .iter()
            .map(Instance::world_bounds)
            .reduce(|a, b| a.union(&b))
            .expect("non-empty scene")
    }

    /// Union semantics: sigma adds, albedo and g are sigma-weighted.
    pub fn medium_at(&self, p: Vec3) -> MediumSample {
        let mut sigma = 0.0;
        let mut albedo = Vec3::ZERO;
        let mut g = 0.0;
        for inst in &self.instances {
            let s = inst.sample(p);
            if s.sigma > 0.0 {
                sigma += s.sigma;
                albedo += s.albedo * s.sigma;
                g += s.g * s.sigma;
            }
        }
        if sigma > 0.0 {
            MediumSample {
                sigma,
                albedo: albedo / sigma,
                g: g / sigma,
            }
        } else {
            MediumSample::VACUUM
        }
    }

    /// Tight intersection of the ray with the union of instance boxes.
    pub fn ray_bounds(&self, ray: &Ray) -> Option<(f64, f64)> {
        let mut out: Option<(f64, f64)> = None;
        for inst in &self.instances {
            if let Some((a, b)) = inst.box_interval(ray, f64::INFINITY) {
                out = Some(match out {
                    None => (a, b),
                    Some((c, d)) => (a.min(c), b.max(d)),
                });
            }
        }
        out
    }

    /// Splits `[0, t_max]` into pieces with a constant set of active
    /// instances, dropping empty pieces.
    pub fn tracking_segments(&self, ray: &Ray, t_max: f64) -> Vec<TrackingSegment> {
        let mut spans: Vec<(f64, f64, f64, bool)> = Vec::with_capacity(self.instances.len());
        for inst in &self.instances {
            let maj = inst.field.majorant();
            if maj <= 0.0 {
                continue;
            }
            if let Some((a, b)) = inst.support_interval(ray, t_max) {
                spans.push((a, b, maj, inst.field.is_homogeneous()));
            }
        }
        if spans.len() == 1 {
            let (a, b, maj, exact) = spans[0];
            return vec![TrackingSegment {
                t0: a,
                t1: b,
                majorant: maj,
                exact,
            }];
        }
        let mut cuts: Vec<f64> = spans.iter().flat_map(|s| [s.0, s.1]).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut out = Vec::new();
        for w in cuts.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            if t1 <= t0 {
                continue;
            }
            let mid = 0.5 * (t0 + t1);
            let mut maj = 0.0;
            let mut exact = true;
            for s in spans.iter().filter(|s| s.0 <= mid && mid <= s.1) {
                maj += s.2;
                exact &= s.3;
            }
            if maj > 0.0 {
                out.push(TrackingSegment {
                    t0,
                    t1,
                    majorant: maj,
                    exact,
                });
            }
        }
        out
    }

    /// Optical depth along `p0 -> p1`: closed form over homogeneous pieces,
    /// `steps`-point midpoint quadrature elsewhere.
    pub fn optical_depth(&self, p0: Vec3, p1: Vec3, steps: usize) -> f64 {
        let delta = p1 - p0;
        let len = delta.length();
        if len == 0.0 {
            return 0.0;
        }
        let ray = Ray::new(p0, Direction::new_unchecked(delta / len));
        let steps = steps.max(1);
        self.tracking_segments(&ray, len)
            .iter()
            .map(|seg| {
                if seg.exact {
                    seg.majorant * (seg.t1 - seg.t0)
                } else {
                    let dt = (seg.t1 - seg.t0) / steps as f64;
                    (0..steps)
                        .map(|j| self.medium_at(ray.at(seg.t0 + (j as f64 + 0.5) * dt)).sigma)
                        .sum::<f64>()
                        * dt
                }
            })
            .sum()
    }

    /// `exp(-optical depth)` between two points.
    pub fn transmittance(&self, p0: Vec3, p1: Vec3, steps: usize) -> f64 {
        (-self.optical_depth(p0, p1, steps)).exp()
    }

    /// Transmittance from `p` along `d` until the ray leaves the scene.
    pub fn transmittance_to_infinity(&self, p: Vec3, d: Direction, steps: usize) -> f64 {
        match self.ray_bounds(&Ray::new(p, d)) {
            Some((_, t1)) => self.transmittance(p, p + d.vec() * t1, steps),
            None => 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::field::ProceduralField;

    fn sphere(sigma: f64) -> SceneDescription {
        SceneDescription::single(MediumField::homogeneous_sphere(1.0, sigma, Vec3::splat(0.8), 0.0).unwrap()).unwrap()
    }

    #[test]
    fn union_rule() {
        let a = MediumField::homogeneous_box(Aabb::cube(1.0), 1.0, Vec3::new(0.2, 0.4, 0.6), 0.1).unwrap();
        let b = MediumField::homogeneous_box(Aabb::cube(1.0), 2.0, Vec3::new(0.8, 0.1, 0.3), -0.5).unwrap();
        let s = SceneDescription::new(vec![
            Instance::new(a, Transform::IDENTITY),
            Instance::new(b, Transform::IDENTITY),
        ])
        .unwrap();
        let m = s.medium_at(Vec3::ZERO);
        assert!((m.sigma - 3.0).abs() < 1e-12);
        let expect = (Vec3::new(0.2, 0.4, 0.6) + Vec3::new(0.8, 0.1, 0.3) * 2.0) / 3.0;
        assert!((m.albedo - expect).length() < 1e-12);
        assert!((m.g - (0.1 - 1.0) / 3.0).abs() < 1e-12);
        assert_eq!(s.medium_at(Vec3::new(5.0, 0.0, 0.0)), MediumSample::VACUUM);
    }

    #[test]
    fn closed_form_transmittance() {
        let s = sphere(2.0);
        let t = s.transmittance(Vec3::new(0.0, 0.0, -0.5), Vec3::new(0.0, 0.0, 0.5), 1);
        assert!((t - (-2.0f64).exp()).abs() < 1e-12);
        assert!((t - 0.135335).abs() < 1e-6);
        let vac = SceneDescription::single(MediumField::homogeneous_sphere(1.0, 0.0, Vec3::ZERO, 0.0).unwrap()).unwrap();
        assert_eq!(vac.transmittance(Vec3::new(-3.0, 0.0, 0.0), Vec3::new(3.0, 0.0, 0.0), 8), 1.0);
    }

    #[test]
    fn transmittance_is_multiplicative() {
        let s = sphere(3.0);
        let p0 = Vec3::new(-2.0, 0.1, 0.0);
        let p1 = Vec3::new(0.1, 0.1, 0.0);
        let p2 = Vec3::new(2.0, 0.1, 0.0);
        let a = s.transmittance(p0, p2, 1);
        let b = s.transmittance(p0, p1, 1) * s.transmittance(p1, p2, 1);
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn procedural_quadrature_converges() {
        let f = MediumField::procedural(ProceduralField {
            sigma_max: 6.0,
            albedo: Vec3::splat(0.9),
            g: 0.0,
            radius: 1.0,
            frequency: 2.0,
            octaves: 4,
            seed: 3,
        })
        .unwrap();
        let s = SceneDescription::single(f).unwrap();
        let p0 = Vec3::new(-1.2, 0.1, -0.2);
        let p1 = Vec3::new(1.1, -0.2, 0.3);
        let coarse = s.transmittance(p0, p1, 1024);
        let fine = s.transmittance(p0, p1, 16384);
        assert!(((coarse - fine) / fine).abs() < 5e-3);
    }

    #[test]
    fn ray_bounds_union() {
        let a = MediumField::homogeneous_box(Aabb::cube(0.5), 1.0, Vec3::ONE, 0.0).unwrap();
        let s = SceneDescription::new(vec![
            Instance::new(a.clone(), Transform::translate(Vec3::new(0.0, 0.0, -2.0))),
            Instance::new(a, Transform::translate(Vec3::new(0.0, 0.0, 2.0))),
        ])
        .unwrap();
        let ray = Ray::new(Vec3::new(0.0, 0.0, -5.0), Direction::new(Vec3::new(0.0, 0.0, 1.0)).unwrap());
        let (t0, t1) = s.ray_bounds(&ray).unwrap();
        assert!((t0 - 2.5).abs() < 1e-12 && (t1 - 7.5).abs() < 1e-12);
        let miss = Ray::new(Vec3::new(3.0, 0.0, -5.0), ray.dir);
        assert!(s.ray_bounds(&miss).is_none());
        let inside = Ray::new(Vec3::new(0.0, 0.0, -2.0), ray.dir);
        assert_eq!(s.ray_bounds(&inside).unwrap().0, 0.0);
    }

    #[test]
    fn empty_scene_rejected() {
        assert!(SceneDescription::new(vec![]).is_err());
    }
}
