use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::{ParamId, ParamSet};
use super::real::Real;
use super::tape::{NodeId, Tape};
use crate::error::{domain_err, Result};
use crate::mathkit::RngStream;

/// Activation applied after the last affine layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Relu,
}

/// Fully connected network: `widths[0]` inputs, rectified hidden layers,
/// `widths.last()` outputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub output: OutputActivation,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: &[usize], output: usize, act: OutputActivation) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        Self { widths, output: act }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(domain_err!("an MLP needs at least one layer"));
        }
        if self.widths.contains(&0) {
            return Err(domain_err!("MLP widths must be >= 1: {:?}", self.widths));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated")
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }
}

/// An [`MlpSpec`] bound to its parameter blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    /// Registers `name.{i}.w` / `name.{i}.b` blocks with uniform
    /// `+-sqrt(6 / (fan_in + fan_out))` weights and zero biases.
    pub fn init<T: Real>(name: &str, spec: MlpSpec, params: &mut ParamSet<T>, rng: &mut RngStream) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::new();
        for (i, w) in spec.widths.windows(2).enumerate() {
            let (fi, fo) = (w[0], w[1]);
            let lim = (6.0 / (fi + fo) as f64).sqrt();
            let wv = (0..fi * fo).map(|_| T::lift(rng.uniform_range(-lim, lim))).collect();
            let wid = params.add(format!("{name}.{i}.w"), fi, fo, wv);
            let bid = params.add(format!("{name}.{i}.b"), 1, fo, vec![T::zero(); fo]);
            layers.push((wid, bid));
        }
        Ok(Self { spec, layers })
    }

    /// Rebinds to blocks already present in `params` (e.g. after loading).
    pub fn bind<T: Real>(name: &str, spec: MlpSpec, params: &ParamSet<T>) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::new();
        for (i, w) in spec.widths.windows(2).enumerate() {
            let find = |suffix: &str, rows: usize, cols: usize| {
                let key = format!("{name}.{i}.{suffix}");
                let id = params.find(&key).ok_or_else(|| domain_err!("missing parameter block '{key}'"))?;
                let b = params.get(id);
                if (b.rows, b.cols) != (rows, cols) {
                    return Err(domain_err!("block '{key}' is {}x{}, expected {rows}x{cols}", b.rows, b.cols));
                }
                Ok(id)
            };
            layers.push((find("w", w[0], w[1])?, find("b", 1, w[1])?));
        }
        Ok(Self { spec, layers })
    }

    pub fn last_bias(&self) -> ParamId {
        self.layers.last().expect("validated").1
    }

    /// Records the network on `tape`.
    pub fn forward_tape<T: Real>(&self, params: &ParamSet<T>, tape: &mut Tape<T>, x: NodeId) -> Result<NodeId> {
        let mut h = x;
        let n = self.layers.len();
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            h = tape.linear(params, h, w, b)?;
            if i + 1 < n || self.spec.output == OutputActivation::Relu {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    /// Tape-free evaluation.
    pub fn forward<T: Real>(&self, params: &ParamSet<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.cols != self.spec.input_dim() {
            return Err(domain_err!("MLP expects {} inputs, got {}", self.spec.input_dim(), x.cols));
        }
        let mut h = x.clone();
        let n = self.layers.len();
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let (wb, bb) = (params.get(w), params.get(b));
            let mut out = Matrix::zeros(h.rows, wb.cols);
            for r in 0..out.rows {
                out.row_mut(r).copy_from_slice(&bb.value);
            }
            T::gemm(h.rows, wb.rows, wb.cols, &h.data, false, &wb.value, false, T::one(), &mut out.data);
            if i + 1 < n || self.spec.output == OutputActivation::Relu {
                out.data.iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
            h = out;
        }
        Ok(h)
    }
}

/// One-shot evaluation of `mlp` on a single input vector, recording on
/// `tape` when given.
pub fn mlp_forward<T: Real>(
    mlp: &Mlp,
    params: &ParamSet<T>,
    input: &[T],
    tape: Option<&mut Tape<T>>,
) -> Result<Vec<T>> {
    if input.len() != mlp.spec.input_dim() {
        return Err(domain_err!("MLP expects {} inputs, got {}", mlp.spec.input_dim(), input.len()));
    }
    let x = Matrix::from_vec(1, input.len(), input.to_vec());
    match tape {
        Some(t) => {
            let xi = t.input(x);
            let y = mlp.forward_tape(params, t, xi)?;
            Ok(t.value(y).data.clone())
        }
        None => Ok(mlp.forward(params, &x)?.data),
    }
}
