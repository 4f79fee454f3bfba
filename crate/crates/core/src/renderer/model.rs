use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::NetworkSet;
use crate::light::LightCondition;
use crate::mathkit::{Direction, Vec3};
use crate::media::{Aabb, MediumSample, Ray, SceneDescription};
use crate::oracle::ProbeGrid;

/// Where shadow-ray visibility comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisibilitySource {
    /// The visibility network.
    Learned,
    /// Transmittance computed from the model's own density.
    Oracle,
}

impl std::str::FromStr for VisibilitySource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(Self::Learned),
            "oracle" => Ok(Self::Oracle),
            other => Err(Error::Usage(format!("unknown visibility source '{other}' (learned|oracle)"))),
        }
    }
}

/// A shadow segment: start point, direction and length (may be infinite).
pub type Segment = (Vec3, Direction, f64);

/// What the marcher needs from a volume: properties, indirect-radiance SH
/// coefficients and shadow visibility.
pub trait VolumeModel: Sync {
    /// Region sampled along camera rays.
    fn domain(&self) -> Aabb;

    /// Band of the SH field, `None` without one.
    fn sh_band(&self) -> Option<usize>;

    /// Properties plus flat channel-major coefficients (`3 n` per point,
    /// empty without an SH field).
    fn query(&self, points: &[Vec3], light: &LightCondition) -> Result<(Vec<MediumSample>, Vec<f64>)>;

    fn visibility(&self, source: VisibilitySource, segments: &[Segment]) -> Result<Vec<f64>>;

    /// Camera-ray interval inside the domain.
    fn ray_interval(&self, ray: &Ray) -> Option<(f64, f64)> {
        self.domain().intersect(ray.origin, ray.dir.vec(), f64::INFINITY).filter(|(a, b)| b > a)
    }
}

/// A trained network set.
pub struct NeuralModel<'a> {
    pub net: &'a NetworkSet<f32>,
    /// Quadrature points for [`VisibilitySource::Oracle`] transmittance.
    pub transmittance_steps: usize,
}

impl<'a> NeuralModel<'a> {
    pub fn new(net: &'a NetworkSet<f32>) -> Self {
        Self {
            net,
            transmittance_steps: 64,
        }
    }
}

impl VolumeModel for NeuralModel<'_> {
    fn domain(&self) -> Aabb {
        self.net.cfg.domain
    }

    fn sh_band(&self) -> Option<usize> {
        self.net.cfg.sh_enabled.then_some(self.net.cfg.l_max)
    }

    fn query(&self, points: &[Vec3], light: &LightCondition) -> Result<(Vec<MediumSample>, Vec<f64>)> {
        self.net.query_points(points, Some(light))
    }

    fn visibility(&self, source: VisibilitySource, segments: &[Segment]) -> Result<Vec<f64>> {
        match source {
            VisibilitySource::Learned => {
                let pairs: Vec<(Vec3, Direction)> = segments.iter().map(|&(p, d, _)| (p, d)).collect();
                self.net.query_visibility(&pairs)
            }
            VisibilitySource::Oracle => self.net.marched_transmittance(segments, self.transmittance_steps),
        }
    }
}

/// Ground truth standing in for every network: the scene's own properties,
/// exact transmittance for visibility (whatever the source) and probe
/// projected indirect radiance.
pub struct FrozenOracle<'a> {
    pub scene: &'a SceneDescription,
    pub probes: Option<&'a ProbeGrid>,
    pub transmittance_steps: usize,
}

impl VolumeModel for FrozenOracle<'_> {
    fn domain(&self) -> Aabb {
        self.scene.bounds()
    }

    fn sh_band(&self) -> Option<usize> {
        self.probes.map(|p| p.l_max)
    }

    /// Union of the instances' support intervals, so samples never straddle
    /// an analytic boundary.
    fn ray_interval(&self, ray: &Ray) -> Option<(f64, f64)> {
        let mut out: Option<(f64, f64)> = None;
        for inst in &self.scene.instances {
            if let Some((a, b)) = inst.support_interval(ray, f64::INFINITY) {
                out = Some(out.map_or((a, b), |(c, d)| (a.min(c), b.max(d))));
            }
        }
        out.filter(|(a, b)| b > a)
    }

    fn query(&self, points: &[Vec3], _light: &LightCondition) -> Result<(Vec<MediumSample>, Vec<f64>)> {
        let props = points.iter().map(|&p| self.scene.medium_at(p)).collect();
        let coeffs = match self.probes {
            Some(g) => {
                let n = 3 * crate::mathkit::sh::sh_count(g.l_max);
                let mut out = vec![0.0; n * points.len()];
                for (p, o) in points.iter().zip(out.chunks_mut(n)) {
                    g.coeffs_at(*p, o);
                }
                out
            }
            None => Vec::new(),
        };
        Ok((props, coeffs))
    }

    fn visibility(&self, _source: VisibilitySource, segments: &[Segment]) -> Result<Vec<f64>> {
        let steps = self.transmittance_steps;
        Ok(segments
            .iter()
            .map(|&(p, d, len)| {
                if len.is_finite() {
                    self.scene.transmittance(p, p + d.vec() * len, steps)
                } else {
                    self.scene.transmittance_to_infinity(p, d, steps)
                }
            })
            .collect())
    }
}
