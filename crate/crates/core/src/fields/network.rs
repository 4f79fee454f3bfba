use serde::{Deserialize, Serialize};

use super::light_encoding::{encode_light_condition, LightConditionEncoding};
use crate::autodiff::tape::{sigmoid, softplus};
use crate::autodiff::{Matrix, Mlp, MlpSpec, NodeId, OutputActivation, ParamId, ParamSet, Real, Tape};
use crate::error::{domain_err, Error, Result};
use crate::light::LightCondition;
use crate::mathkit::encoding::{encoded_len, positional_encode_into};
use crate::mathkit::sh::sh_count;
use crate::mathkit::{Direction, RngStream, Vec3};
use crate::media::{Aabb, MediumSample, PropertySource};

/// Bound on the asymmetry output: `g = G_SCALE * tanh(raw)`.
pub const G_SCALE: f64 = 0.999;

/// Largest supported SH band.
pub const MAX_L: usize = 9;

/// Points per chunk in tape-free batch queries.
const QUERY_CHUNK: usize = 4096;

/// Shapes and encodings of the four networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub l_max: usize,
    /// When false the SH head is absent and indirect light is zero.
    pub sh_enabled: bool,
    pub pos_bands: usize,
    pub dir_bands: usize,
    pub light_bands: usize,
    pub feature_layers: usize,
    pub feature_width: usize,
    pub property_width: usize,
    pub sh_layers: usize,
    pub sh_width: usize,
    pub vis_layers: usize,
    pub vis_width: usize,
    /// One trainable asymmetry for the whole scene instead of a per-point one.
    pub global_g: bool,
    /// Region the networks describe. Positions are mapped so this box spans
    /// `[-1/2, 1/2]` on every axis.
    pub domain: Aabb,
    /// World-space width mapped to a unit interval for light positions.
    pub light_span: f64,
    /// Density every point starts out with.
    pub initial_sigma: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            l_max: 5,
            sh_enabled: true,
            pos_bands: 8,
            dir_bands: 1,
            light_bands: 2,
            feature_layers: 8,
            feature_width: 256,
            property_width: 128,
            sh_layers: 8,
            sh_width: 128,
            vis_layers: 4,
            vis_width: 256,
            global_g: false,
            domain: Aabb::cube(1.0),
            light_span: 12.0,
            initial_sigma: 0.1,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l_max > MAX_L {
            return Err(domain_err!("l_max {} outside [0, {MAX_L}]", self.l_max));
        }
        let dims = [
            ("feature_layers", self.feature_layers),
            ("feature_width", self.feature_width),
            ("property_width", self.property_width),
            ("sh_layers", self.sh_layers),
            ("sh_width", self.sh_width),
            ("vis_layers", self.vis_layers),
            ("vis_width", self.vis_width),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(domain_err!("{name} must be >= 1"));
            }
        }
        self.domain.validate()?;
        let e = self.domain.extent();
        if !(e.x > 0.0 && e.y > 0.0 && e.z > 0.0) {
            return Err(domain_err!("network domain must have positive volume"));
        }
        if !(self.light_span > 0.0 && self.light_span.is_finite()) {
            return Err(domain_err!("light_span must be positive"));
        }
        if !(self.initial_sigma > 0.0 && self.initial_sigma.is_finite()) {
            return Err(domain_err!("initial_sigma must be positive"));
        }
        Ok(())
    }

    pub fn pos_len(&self) -> usize {
        encoded_len(3, self.pos_bands)
    }

    pub fn dir_len(&self) -> usize {
        encoded_len(3, self.dir_bands)
    }

    pub fn light_len(&self) -> usize {
        LightConditionEncoding::len(self.light_bands)
    }

    /// SH coefficients per channel, 0 when the head is disabled.
    pub fn sh_count(&self) -> usize {
        if self.sh_enabled {
            sh_count(self.l_max)
        } else {
            0
        }
    }

    fn feature_spec(&self) -> MlpSpec {
        let hidden = vec![self.feature_width; self.feature_layers - 1];
        MlpSpec::new(self.pos_len(), &hidden, self.feature_width, OutputActivation::Relu)
    }

    fn property_spec(&self) -> MlpSpec {
        MlpSpec::new(self.feature_width, &[self.property_width], 5, OutputActivation::Identity)
    }

    fn sh_spec(&self) -> MlpSpec {
        let hidden = vec![self.sh_width; self.sh_layers];
        MlpSpec::new(self.light_len() + self.feature_width, &hidden, 3 * self.sh_count(), OutputActivation::Identity)
    }

    fn vis_spec(&self) -> MlpSpec {
        let hidden = vec![self.vis_width; self.vis_layers];
        MlpSpec::new(self.pos_len() + self.dir_len(), &hidden, 1, OutputActivation::Identity)
    }
}

/// Tape nodes describing a batch of points.
#[derive(Clone, Copy, Debug)]
pub struct PointNodes {
    /// `P x 1`
    pub sigma: NodeId,
    /// `P x 3`
    pub albedo: NodeId,
    /// `P x 1`
    pub g: NodeId,
    /// `P x 3n`, channel-major per row; absent without the SH head.
    pub sh: Option<NodeId>,
}

/// Feature, property, SH and visibility networks with their parameters.
#[derive(Clone, Debug)]
pub struct NetworkSet<T: Real> {
    pub cfg: NetworkConfig,
    pub params: ParamSet<T>,
    pub feature: Mlp,
    pub property: Mlp,
    pub sh: Option<Mlp>,
    pub visibility: Mlp,
    pub global_g: Option<ParamId>,
}

impl<T: Real> NetworkSet<T> {
    /// Fresh networks; every point starts at `cfg.initial_sigma`.
    pub fn init(cfg: NetworkConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let mut rng = RngStream::split(seed, 0x4e45_5453, 0);
        let feature = Mlp::init("feature", cfg.feature_spec(), &mut params, &mut rng)?;
        let property = Mlp::init("property", cfg.property_spec(), &mut params, &mut rng)?;
        let sh = if cfg.sh_enabled {
            Some(Mlp::init("sh", cfg.sh_spec(), &mut params, &mut rng)?)
        } else {
            None
        };
        let visibility = Mlp::init("visibility", cfg.vis_spec(), &mut params, &mut rng)?;
        let global_g = cfg.global_g.then(|| params.add("global_g", 1, 1, vec![T::zero()]));
        let bias = property.last_bias();
        params.get_mut(bias).value[0] = T::lift(cfg.initial_sigma.exp_m1().ln());
        Ok(Self {
            cfg,
            params,
            feature,
            property,
            sh,
            visibility,
            global_g,
        })
    }

    /// Rebinds networks described by `cfg` to loaded parameters.
    pub fn from_params(cfg: NetworkConfig, params: ParamSet<T>) -> Result<Self> {
        cfg.validate()?;
        let feature = Mlp::bind("feature", cfg.feature_spec(), &params)?;
        let property = Mlp::bind("property", cfg.property_spec(), &params)?;
        let sh = if cfg.sh_enabled {
            Some(Mlp::bind("sh", cfg.sh_spec(), &params)?)
        } else {
            None
        };
        let visibility = Mlp::bind("visibility", cfg.vis_spec(), &params)?;
        let global_g = if cfg.global_g {
            let id = params.find("global_g").ok_or_else(|| domain_err!("missing parameter block 'global_g'"))?;
            Some(id)
        } else {
            None
        };
        let expected = params.blocks.len();
        let used = 2 * (feature.layers.len() + property.layers.len() + visibility.layers.len())
            + sh.as_ref().map_or(0, |s| 2 * s.layers.len())
            + usize::from(global_g.is_some());
        if used != expected {
            return Err(domain_err!("parameter set has {expected} blocks, configuration uses {used}"));
        }
        Ok(Self {
            cfg,
            params,
            feature,
            property,
            sh,
            visibility,
            global_g,
        })
    }

    pub fn cast<U: Real>(&self) -> NetworkSet<U> {
        NetworkSet {
            cfg: self.cfg.clone(),
            params: self.params.cast(),
            feature: self.feature.clone(),
            property: self.property.clone(),
            sh: self.sh.clone(),
            visibility: self.visibility.clone(),
            global_g: self.global_g,
        }
    }

    pub fn sh_count(&self) -> usize {
        self.cfg.sh_count()
    }

    /// Parameter blocks owned by the visibility network.
    pub fn visibility_blocks(&self) -> Vec<ParamId> {
        self.visibility.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    fn normalize(&self, p: Vec3) -> [f64; 3] {
        let c = self.cfg.domain.center();
        let e = self.cfg.domain.extent();
        [(p.x - c.x) / e.x, (p.y - c.y) / e.y, (p.z - c.z) / e.z]
    }

    /// `E(p)` for each point, one row per point.
    pub fn encode_points(&self, points: &[Vec3]) -> Matrix<T> {
        let n = self.cfg.pos_len();
        let mut m = Matrix::zeros(points.len(), n);
        for (i, &p) in points.iter().enumerate() {
            positional_encode_into(&self.normalize(p), self.cfg.pos_bands, m.row_mut(i));
        }
        m
    }

    /// `E(p) ++ E(d)` rows for the visibility network. Directions are halved
    /// before encoding so opposite axis directions stay distinct.
    pub fn encode_rays(&self, pairs: &[(Vec3, Direction)]) -> Matrix<T> {
        let (np, nd) = (self.cfg.pos_len(), self.cfg.dir_len());
        let mut m = Matrix::zeros(pairs.len(), np + nd);
        for (i, &(p, d)) in pairs.iter().enumerate() {
            let row = m.row_mut(i);
            positional_encode_into(&self.normalize(p), self.cfg.pos_bands, &mut row[..np]);
            let h = d.vec() * 0.5;
            positional_encode_into(&[h.x, h.y, h.z], self.cfg.dir_bands, &mut row[np..]);
        }
        m
    }

    pub fn encode_light(&self, light: &LightCondition) -> Result<LightConditionEncoding> {
        encode_light_condition(light, self.cfg.domain.center(), self.cfg.light_span, self.cfg.light_bands)
    }

    fn light_rows(&self, light: &LightCondition, rows: usize) -> Result<Matrix<T>> {
        let enc = self.encode_light(light)?.to_vec();
        let mut m = Matrix::zeros(rows, enc.len());
        for r in 0..rows {
            for (d, &v) in m.row_mut(r).iter_mut().zip(&enc) {
                *d = T::lift(v);
            }
        }
        Ok(m)
    }

    fn light_rows_per_point(&self, lights: &[LightCondition]) -> Result<Matrix<T>> {
        let mut m = Matrix::zeros(lights.len(), self.cfg.light_len());
        let mut cache: Option<(LightCondition, Vec<f64>)> = None;
        for (r, l) in lights.iter().enumerate() {
            if cache.as_ref().is_none_or(|(c, _)| c != l) {
                cache = Some((*l, self.encode_light(l)?.to_vec()));
            }
            let enc = &cache.as_ref().expect("filled").1;
            for (d, &v) in m.row_mut(r).iter_mut().zip(enc) {
                *d = T::lift(v);
            }
        }
        Ok(m)
    }

    fn global_g_value(&self) -> Option<f64> {
        self.global_g.map(|id| G_SCALE * self.params.get(id).value[0].as_f64().tanh())
    }

    fn decode_properties(&self, raw: &Matrix<T>) -> Vec<MediumSample> {
        let gg = self.global_g_value();
        (0..raw.rows)
            .map(|r| {
                let v = raw.row(r);
                MediumSample {
                    sigma: softplus(v[0]).as_f64(),
                    albedo: Vec3::new(sigmoid(v[1]).as_f64(), sigmoid(v[2]).as_f64(), sigmoid(v[3]).as_f64()),
                    g: gg.unwrap_or_else(|| G_SCALE * v[4].as_f64().tanh()),
                }
            })
            .collect()
    }

    fn check(m: &Matrix<T>, what: &str) -> Result<()> {
        if m.is_finite() {
            Ok(())
        } else {
            Err(Error::Numerical(format!("non-finite {what} network output")))
        }
    }

    /// Properties and (when `light` is given and the SH head exists) SH
    /// coefficients, sharing one feature evaluation per point. Coefficients
    /// are returned flat, `3n` channel-major values per point.
    pub fn query_points(&self, points: &[Vec3], light: Option<&LightCondition>) -> Result<(Vec<MediumSample>, Vec<f64>)> {
        let mut props = Vec::with_capacity(points.len());
        let mut coeffs = Vec::new();
        for chunk in points.chunks(QUERY_CHUNK) {
            let feat = self.feature.forward(&self.params, &self.encode_points(chunk))?;
            let raw = self.property.forward(&self.params, &feat)?;
            Self::check(&raw, "property")?;
            props.extend(self.decode_properties(&raw));
            if let (Some(sh), Some(l)) = (&self.sh, light) {
                let x = Matrix::hcat(&[&self.light_rows(l, chunk.len())?, &feat]);
                let c = sh.forward(&self.params, &x)?;
                Self::check(&c, "SH")?;
                coeffs.extend(c.data.iter().map(|v| v.as_f64()));
            }
        }
        Ok((props, coeffs))
    }

    pub fn query_properties(&self, points: &[Vec3]) -> Result<Vec<MediumSample>> {
        Ok(self.query_points(points, None)?.0)
    }

    /// Flat channel-major coefficients, empty without the SH head.
    pub fn query_sh_coeffs(&self, points: &[Vec3], light: &LightCondition) -> Result<Vec<f64>> {
        Ok(self.query_points(points, Some(light))?.1)
    }

    pub fn query_visibility(&self, pairs: &[(Vec3, Direction)]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(QUERY_CHUNK) {
            let raw = self.visibility.forward(&self.params, &self.encode_rays(chunk))?;
            Self::check(&raw, "visibility")?;
            out.extend(raw.data.iter().map(|&v| sigmoid(v).as_f64()));
        }
        Ok(out)
    }

    /// Transmittance through the learned density from `p` along `d` over
    /// `dist` (clipped to the domain), by `steps`-point midpoint quadrature.
    /// Evaluated without recording gradients.
    pub fn marched_transmittance(&self, segments: &[(Vec3, Direction, f64)], steps: usize) -> Result<Vec<f64>> {
        if steps == 0 {
            return Err(domain_err!("transmittance steps must be >= 1"));
        }
        let mut pts = Vec::with_capacity(segments.len() * steps);
        let mut dts = Vec::with_capacity(segments.len());
        for &(p, d, dist) in segments {
            let (t0, t1) = self.cfg.domain.intersect(p, d.vec(), dist).unwrap_or((0.0, 0.0));
            let t0 = t0.max(0.0);
            let dt = (t1 - t0).max(0.0) / steps as f64;
            dts.push(dt);
            pts.extend((0..steps).map(|k| p + d.vec() * (t0 + (k as f64 + 0.5) * dt)));
        }
        let props = self.query_properties(&pts)?;
        Ok(props
            .chunks(steps)
            .zip(&dts)
            .map(|(s, &dt)| (-s.iter().map(|m| m.sigma).sum::<f64>() * dt).exp())
            .collect())
    }

    /// Records feature, property and SH evaluation for `points` on `tape`;
    /// `lights` holds the light condition of every point.
    pub fn record_points(&self, tape: &mut Tape<T>, points: &[Vec3], lights: &[LightCondition]) -> Result<PointNodes> {
        if lights.len() != points.len() {
            return Err(domain_err!("{} light conditions for {} points", lights.len(), points.len()));
        }
        let x = tape.input(self.encode_points(points));
        let feat = self.feature.forward_tape(&self.params, tape, x)?;
        let raw = self.property.forward_tape(&self.params, tape, feat)?;
        let s = tape.columns(raw, 0, 1);
        let sigma = tape.softplus(s);
        let a = tape.columns(raw, 1, 3);
        let albedo = tape.sigmoid(a);
        let graw = match self.global_g {
            Some(id) => tape.broadcast(&self.params, id, points.len()),
            None => tape.columns(raw, 4, 1),
        };
        let g = tape.scaled_tanh(graw, G_SCALE);
        let sh = match &self.sh {
            Some(net) => {
                let cond = tape.input(self.light_rows_per_point(lights)?);
                let xin = tape.concat(&[cond, feat]);
                Some(net.forward_tape(&self.params, tape, xin)?)
            }
            None => None,
        };
        Ok(PointNodes { sigma, albedo, g, sh })
    }

    /// Records density alone (`P x 1`) for `points` on `tape`.
    pub fn record_density(&self, tape: &mut Tape<T>, points: &[Vec3]) -> Result<NodeId> {
        let x = tape.input(self.encode_points(points));
        let feat = self.feature.forward_tape(&self.params, tape, x)?;
        let raw = self.property.forward_tape(&self.params, tape, feat)?;
        let s = tape.columns(raw, 0, 1);
        Ok(tape.softplus(s))
    }

    /// Records the visibility network (after its logistic output) on `tape`.
    pub fn record_visibility(&self, tape: &mut Tape<T>, pairs: &[(Vec3, Direction)]) -> Result<NodeId> {
        let x = tape.input(self.encode_rays(pairs));
        let raw = self.visibility.forward_tape(&self.params, tape, x)?;
        Ok(tape.sigmoid(raw))
    }
}

impl<T: Real> PropertySource for NetworkSet<T> {
    fn bounds(&self) -> Aabb {
        self.cfg.domain
    }

    fn properties(&self, points: &[Vec3]) -> Result<Vec<MediumSample>> {
        self.query_properties(points)
    }
}
