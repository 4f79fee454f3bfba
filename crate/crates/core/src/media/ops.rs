//! Grid extraction, editing and scene composition.

use crate::error::{domain_err, Error, Result};
use crate::mathkit::Vec3;

use super::field::{Aabb, FieldKind, GridField, MediumField, MediumSample, GRID_CHANNELS};
use super::scene::{Instance, SceneDescription};
use super::transform::Transform;

/// Anything that can be queried for medium properties over a box.
pub trait PropertySource {
    fn bounds(&self) -> Aabb;
    fn properties(&self, points: &[Vec3]) -> Result<Vec<MediumSample>>;
}

impl PropertySource for MediumField {
    fn bounds(&self) -> Aabb {
        self.bounds
    }

    fn properties(&self, points: &[Vec3]) -> Result<Vec<MediumSample>> {
        Ok(points.iter().map(|&p| self.sample_local(p)).collect())
    }
}

impl PropertySource for SceneDescription {
    fn bounds(&self) -> Aabb {
        SceneDescription::bounds(self)
    }

    fn properties(&self, points: &[Vec3]) -> Result<Vec<MediumSample>> {
        Ok(points.iter().map(|&p| self.medium_at(p)).collect())
    }
}

/// Default cap on extracted grid payloads (bytes).
pub const DEFAULT_GRID_BYTES_CAP: usize = 1 << 30;

/// Samples `source` at voxel centres over its bounds.
pub fn extract_grids<S: PropertySource + ?Sized>(
    source: &S,
    res: [usize; 3],
    bytes_cap: usize,
) -> Result<MediumField> {
    if res.iter().any(|&n| n < 2) {
        return Err(domain_err!("grid resolution {res:?} must be >= 2 per axis"));
    }
    let bytes = res
        .iter()
        .try_fold(GRID_CHANNELS * 4, |acc, &n| acc.checked_mul(n))
        .filter(|&b| b <= bytes_cap)
        .ok_or_else(|| Error::Resource(format!("grid {res:?} exceeds the {bytes_cap}-byte cap")))?;
    let bounds = source.bounds();
    let e = bounds.extent();
    let mut data = Vec::with_capacity(bytes / 4);
    // one z-slice per query keeps memory bounded for large sources
    for k in 0..res[2] {
        let mut pts = Vec::with_capacity(res[0] * res[1]);
        for j in 0..res[1] {
            for i in 0..res[0] {
                pts.push(
                    bounds.min
                        + Vec3::new(
                            (i as f64 + 0.5) / res[0] as f64 * e.x,
                            (j as f64 + 0.5) / res[1] as f64 * e.y,
                            (k as f64 + 0.5) / res[2] as f64 * e.z,
                        ),
                );
            }
        }
        for s in source.properties(&pts)? {
            data.extend_from_slice(&[
                s.sigma as f32,
                s.albedo.x as f32,
                s.albedo.y as f32,
                s.albedo.z as f32,
                s.g as f32,
            ]);
        }
    }
    MediumField::grid(GridField::new(res, data)?, bounds)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Edit {
    DensityScale(f64),
    /// Channel index 0..3 (R, G, B) and factor; results clamp to `[0, 1]`.
    AlbedoScale(usize, f64),
}

impl Edit {
    /// Parses `r`, `g`, `b` (or `red`, `green`, `blue`) into a channel edit.
    pub fn albedo(channel: &str, k: f64) -> Result<Edit> {
        let c = match channel.to_ascii_lowercase().as_str() {
            "r" | "red" => 0,
            "g" | "green" => 1,
            "b" | "blue" => 2,
            other => return Err(domain_err!("unknown albedo channel '{other}'")),
        };
        Ok(Edit::AlbedoScale(c, k))
    }
}

/// Pure edit of a grid field.
pub fn apply_edit(field: &MediumField, edit: Edit) -> Result<MediumField> {
    let FieldKind::Grid(grid) = &field.kind else {
        return Err(domain_err!("edits apply to grid fields; extract a grid first"));
    };
    let mut grid = grid.clone();
    match edit {
        Edit::DensityScale(k) => {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(domain_err!("density scale {k} must be >= 0"));
            }
            for v in grid.data_mut().chunks_exact_mut(GRID_CHANNELS) {
                v[0] = (v[0] as f64 * k) as f32;
            }
        }
        Edit::AlbedoScale(c, k) => {
            if c > 2 {
                return Err(domain_err!("unknown albedo channel index {c}"));
            }
            if !(k >= 0.0 && k.is_finite()) {
                return Err(domain_err!("albedo scale {k} must be >= 0"));
            }
            for v in grid.data_mut().chunks_exact_mut(GRID_CHANNELS) {
                v[1 + c] = ((v[1 + c] as f64 * k).clamp(0.0, 1.0)) as f32;
            }
        }
    }
    MediumField::grid(grid, field.bounds)
}

/// Concatenates instances with composed transforms; lights come from the
/// first (host) scene.
pub fn compose(scenes: &[(SceneDescription, Transform)]) -> Result<SceneDescription> {
    let Some((host, _)) = scenes.first() else {
        return Err(domain_err!("compose needs at least one scene"));
    };
    let mut instances = Vec::new();
    for (scene, placement) in scenes {
        placement.validate()?;
        for inst in &scene.instances {
            instances.push(Instance {
                field: inst.field.clone(),
                transform: placement.compose(&inst.transform),
            });
        }
    }
    let out = SceneDescription {
        instances,
        background: host.background,
        lights: host.lights.clone(),
        env: host.env.clone(),
    };
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathkit::Direction;
    use crate::media::scene::Ray;

    fn sphere_field() -> MediumField {
        MediumField::homogeneous_sphere(1.0, 2.0, Vec3::splat(0.4), 0.1).unwrap()
    }

    #[test]
    fn constant_field_extraction() {
        let f = MediumField::homogeneous_box(Aabb::cube(1.0), 2.0, Vec3::splat(0.5), 0.0).unwrap();
        let g = extract_grids(&f, [16, 16, 16], DEFAULT_GRID_BYTES_CAP).unwrap();
        let FieldKind::Grid(grid) = &g.kind else { panic!() };
        assert!(grid.data().chunks_exact(GRID_CHANNELS).all(|v| v[0] == 2.0));
    }

    #[test]
    fn grid_round_trip_is_identity() {
        let g1 = extract_grids(&sphere_field(), [9, 7, 8], DEFAULT_GRID_BYTES_CAP).unwrap();
        let g2 = extract_grids(&g1, [9, 7, 8], DEFAULT_GRID_BYTES_CAP).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn memory_cap() {
        let err = extract_grids(&sphere_field(), [64, 64, 64], 1000).unwrap_err();
        assert!(matches!(err, Error::Resource(_)));
        assert!(extract_grids(&sphere_field(), [1, 4, 4], DEFAULT_GRID_BYTES_CAP).is_err());
    }

    #[test]
    fn refinement_reduces_error() {
        let src = sphere_field();
        let probe: Vec<Vec3> = (0..2000)
            .map(|i| {
                let f = i as f64;
                Vec3::new((f * 0.37).sin(), (f * 0.11).cos(), (f * 0.73).sin()) * 0.99
            })
            .collect();
        let err = |n: usize| {
            let g = extract_grids(&src, [n, n, n], DEFAULT_GRID_BYTES_CAP).unwrap();
            probe
                .iter()
                .map(|&p| (g.sample_local(p).sigma - src.sample_local(p).sigma).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let (e8, e16, e32) = (err(8), err(16), err(32));
        assert!(e16 < e8 && e32 < e16, "{e8} {e16} {e32}");
    }

    #[test]
    fn edits() {
        let g = extract_grids(&sphere_field(), [4, 4, 4], DEFAULT_GRID_BYTES_CAP).unwrap();
        assert_eq!(apply_edit(&g, Edit::DensityScale(1.0)).unwrap(), g);
        let thin = apply_edit(&g, Edit::DensityScale(0.0)).unwrap();
        let s = SceneDescription::single(thin).unwrap();
        assert_eq!(s.transmittance(Vec3::new(-2.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0), 64), 1.0);
        let red = apply_edit(&g, Edit::albedo("r", 2.0).unwrap()).unwrap();
        let FieldKind::Grid(gr) = &red.kind else { panic!() };
        // voxel (1, 1, 1) lies inside the sphere
        let c = 21 * GRID_CHANNELS;
        let v = &gr.data()[c..c + GRID_CHANNELS];
        assert!((v[1] - 0.8).abs() < 1e-6 && (v[2] - 0.4).abs() < 1e-6);
        let sat = apply_edit(&g, Edit::AlbedoScale(1, 10.0)).unwrap();
        let FieldKind::Grid(gs) = &sat.kind else { panic!() };
        assert_eq!(gs.data()[c + 2], 1.0);
        assert!(Edit::albedo("alpha", 1.0).is_err());
        assert!(apply_edit(&sphere_field(), Edit::DensityScale(2.0)).is_err());
    }

    #[test]
    fn compose_identity_and_union() {
        let s = SceneDescription::single(sphere_field()).unwrap();
        let c = compose(&[(s.clone(), Transform::IDENTITY)]).unwrap();
        assert_eq!(c, s);
        assert!(compose(&[]).is_err());

        let unit = SceneDescription::single(
            MediumField::homogeneous_box(Aabb::cube(0.5), 1.0, Vec3::ONE, 0.0).unwrap(),
        )
        .unwrap();
        let both = compose(&[
            (unit.clone(), Transform::translate(Vec3::new(-2.0, 0.0, 0.0))),
            (unit, Transform::translate(Vec3::new(2.0, 0.0, 0.0))),
        ])
        .unwrap();
        let ray = Ray::new(Vec3::new(-5.0, 0.0, 0.0), Direction::new(Vec3::new(1.0, 0.0, 0.0)).unwrap());
        let (t0, t1) = both.ray_bounds(&ray).unwrap();
        assert!((t0 - 2.5).abs() < 1e-12 && (t1 - 7.5).abs() < 1e-12);
    }
}
