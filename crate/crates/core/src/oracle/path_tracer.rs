use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::{domain_err, Error, Result};
use crate::image::HdrImage;
use crate::light::LightCondition;
use crate::mathkit::sampling::uniform_sphere;
use crate::mathkit::{hg_sample, Direction, RngStream, Vec3, UNIFORM_SPHERE_PDF};
use crate::mathkit::hg::hg_cos;
use crate::media::{MediumSample, Ray, SceneDescription};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathTracerConfig {
    pub spp: usize,
    /// Maximum number of scattering events per path.
    pub max_bounces: usize,
    /// Russian roulette applies from this scattering event on.
    pub rr_start: usize,
    pub rr_floor: f64,
    /// Quadrature steps for shadow segments through heterogeneous media.
    pub transmittance_steps: usize,
    pub seed: u64,
}

impl Default for PathTracerConfig {
    fn default() -> Self {
        Self {
            spp: 256,
            max_bounces: 256,
            rr_start: 8,
            rr_floor: 0.05,
            transmittance_steps: 256,
            seed: 0,
        }
    }
}

impl PathTracerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.spp == 0 || self.max_bounces == 0 || self.transmittance_steps == 0 {
            return Err(domain_err!("spp, max_bounces and transmittance_steps must be >= 1"));
        }
        if !(self.rr_floor > 0.0 && self.rr_floor <= 1.0) {
            return Err(domain_err!("rr_floor {} outside (0, 1]", self.rr_floor));
        }
        Ok(())
    }
}

const DOMAIN_PIXEL: u64 = 0x5054_5049_5845_4c00;

/// Samples the first real collision along `ray` within `[0, t_max]` by
/// delta tracking over the scene's tracking segments.
pub fn sample_collision(scene: &SceneDescription, ray: &Ray, t_max: f64, rng: &mut RngStream) -> Option<(f64, MediumSample)> {
    for seg in scene.tracking_segments(ray, t_max) {
        let mut t = seg.t0;
        loop {
            t -= (1.0 - rng.uniform()).ln() / seg.majorant;
            if t >= seg.t1 {
                break;
            }
            let m = scene.medium_at(ray.at(t));
            if seg.exact || rng.uniform() * seg.majorant < m.sigma {
                return Some((t, m));
            }
        }
    }
    None
}

/// Radiance split by the number of scattering events it went through.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct PathRadiance {
    pub single: Vec3,
    pub multi: Vec3,
}

pub(crate) struct Tracer<'a> {
    pub scene: &'a SceneDescription,
    pub light: &'a LightCondition,
    pub cfg: &'a PathTracerConfig,
}

impl Tracer<'_> {
    /// Light arriving at scattering vertex `p` (towards `w_o`) from the
    /// point light and, when enabled, one environment direction.
    fn next_event(&self, p: Vec3, w_o: Direction, m: &MediumSample, rng: &mut RngStream) -> Vec3 {
        let mut out = Vec3::ZERO;
        let to_light = self.light.position - p;
        let d2 = to_light.length_squared();
        if self.light.intensity > 0.0 && d2 > 0.0 {
            let w_l = to_light / d2.sqrt();
            let tr = self.scene.transmittance(p, self.light.position, self.cfg.transmittance_steps);
            let rho = hg_cos(w_o.vec().dot(w_l), m.g);
            out += Vec3::splat(rho * self.light.intensity / d2 * tr);
        }
        if self.light.env {
            let w = uniform_sphere(rng.uniform(), rng.uniform());
            let le = self.scene.env.radiance(w);
            if le.max_component() > 0.0 {
                let tr = self.scene.transmittance_to_infinity(p, w, self.cfg.transmittance_steps);
                let rho = hg_cos(w_o.vec().dot(w.vec()), m.g);
                out += le * (rho * tr / UNIFORM_SPHERE_PDF);
            }
        }
        out
    }

    /// Follows `ray` through the medium; returns the radiance it carries back
    /// to its origin, classified by the number of scattering events counted
    /// from `prior` already-made events. `None` when the ray escapes before
    /// its first collision.
    pub fn trace(&self, mut ray: Ray, prior: usize, rng: &mut RngStream) -> Result<(PathRadiance, bool)> {
        let mut out = PathRadiance::default();
        let mut beta = Vec3::ONE;
        let mut events = prior;
        let mut hit_any = false;
        loop {
            let Some((t, m)) = sample_collision(self.scene, &ray, f64::INFINITY, rng) else {
                break;
            };
            hit_any = true;
            events += 1;
            let p = ray.at(t);
            let w_o = -ray.dir;
            beta = beta.mul_elem(m.albedo);
            if beta.max_component() <= 0.0 {
                break;
            }
            let c = beta.mul_elem(self.next_event(p, w_o, &m, rng));
            if !c.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite path contribution at {p:?} after {events} events"
                )));
            }
            if events == 1 {
                out.single += c;
            } else {
                out.multi += c;
            }
            if events - prior >= self.cfg.max_bounces {
                break;
            }
            if events - prior >= self.cfg.rr_start {
                let q = beta.luminance().clamp(self.cfg.rr_floor, 1.0);
                if rng.uniform() >= q {
                    break;
                }
                beta = beta / q;
            }
            let (w_i, _) = hg_sample(w_o, m.g, rng.uniform(), rng.uniform())?;
            ray = Ray::new(p, w_i);
        }
        Ok((out, hit_any))
    }
}

/// Per-pixel (direct, indirect) estimates; the background seen by camera
/// rays that leave the scene unscattered belongs to the direct layer.
fn trace_pixel(tracer: &Tracer, camera: &Camera, pixel: usize) -> Result<(Vec3, Vec3)> {
    let ray = camera.ray_index(pixel);
    let mut direct = Vec3::ZERO;
    let mut indirect = Vec3::ZERO;
    let bg = tracer.scene.background;
    for s in 0..tracer.cfg.spp {
        let mut rng = RngStream::split(tracer.cfg.seed, DOMAIN_PIXEL ^ pixel as u64, s as u64);
        let (r, hit) = tracer.trace(ray, 0, &mut rng)?;
        direct += r.single;
        indirect += r.multi;
        if !hit {
            direct += bg;
        }
    }
    let n = tracer.cfg.spp as f64;
    Ok((direct / n, indirect / n))
}

/// Brute-force volumetric path tracing with direct/indirect layers.
pub fn render_reference(
    scene: &SceneDescription,
    camera: &Camera,
    light: &LightCondition,
    cfg: &PathTracerConfig,
) -> Result<HdrImage> {
    camera.validate()?;
    cfg.validate()?;
    light.validate()?;
    let tracer = Tracer { scene, light, cfg };
    let px: Vec<(Vec3, Vec3)> = (0..camera.pixel_count())
        .into_par_iter()
        .map(|i| trace_pixel(&tracer, camera, i))
        .collect::<Result<_>>()?;
    let (d, ind): (Vec<Vec3>, Vec<Vec3>) = px.into_iter().unzip();
    HdrImage::from_layers(camera.width, camera.height, &d, &ind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::MediumField;

    fn sphere_scene(sigma: f64, albedo: f64) -> SceneDescription {
        SceneDescription::single(MediumField::homogeneous_sphere(1.0, sigma, Vec3::splat(albedo), 0.0).unwrap()).unwrap()
    }

    fn cam(n: usize) -> Camera {
        Camera::look_at(Vec3::new(0.0, 0.0, 4.0), Vec3::ZERO, Vec3::new(0.0, 1.0, 0.0), 40.0, n, n).unwrap()
    }

    fn light() -> LightCondition {
        LightCondition::point(Vec3::new(2.0, 3.0, 1.0), 300.0)
    }

    #[test]
    fn vacuum_is_black() {
        let img = render_reference(&sphere_scene(0.0, 0.8), &cam(8), &light(), &PathTracerConfig { spp: 4, ..Default::default() }).unwrap();
        assert!(img.rgb.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn absorbing_sphere_has_no_indirect() {
        let img = render_reference(&sphere_scene(4.0, 0.0), &cam(8), &light(), &PathTracerConfig { spp: 8, ..Default::default() }).unwrap();
        assert!(img.indirect.as_ref().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layers_add_up() {
        let img = render_reference(&sphere_scene(4.0, 0.8), &cam(8), &light(), &PathTracerConfig { spp: 8, ..Default::default() }).unwrap();
        let d = img.direct.as_ref().unwrap();
        let i = img.indirect.as_ref().unwrap();
        for k in 0..img.rgb.len() {
            assert!((d[k] + i[k] - img.rgb[k]).abs() <= 1e-4 * img.rgb[k].abs().max(1e-6));
        }
        assert!(img.mean().x > 0.0);
    }

    #[test]
    fn thread_count_independent() {
        let scene = sphere_scene(4.0, 0.8);
        let cfg = PathTracerConfig { spp: 4, seed: 11, ..Default::default() };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| render_reference(&scene, &cam(6), &light(), &cfg)).unwrap();
        let b = three.install(|| render_reference(&scene, &cam(6), &light(), &cfg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn more_bounces_capture_more_energy() {
        let scene = sphere_scene(4.0, 1.0);
        let energy = |b: usize| {
            let cfg = PathTracerConfig { spp: 64, max_bounces: b, rr_start: 1000, seed: 5, ..Default::default() };
            let m = render_reference(&scene, &cam(6), &light(), &cfg).unwrap().mean();
            m.x + m.y + m.z
        };
        let (e1, e2, e8) = (energy(1), energy(2), energy(8));
        assert!(e1 < e2 && e2 < e8, "{e1} {e2} {e8}");
    }

    #[test]
    fn pixels_bounded_by_brightest_source() {
        let scene = sphere_scene(4.0, 1.0);
        let l = light();
        let img = render_reference(&scene, &cam(6), &l, &PathTracerConfig { spp: 16, ..Default::default() }).unwrap();
        let dmin = l.position.length() - 1.0;
        let bound = l.intensity / (dmin * dmin);
        assert!(img.rgb.iter().all(|&v| (v as f64) <= bound));
    }
}
