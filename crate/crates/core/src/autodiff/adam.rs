use super::params::ParamSet;
use super::real::Real;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter block plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        Self {
            m: params.blocks.iter().map(|b| vec![T::zero(); b.value.len()]).collect(),
            v: params.blocks.iter().map(|b| vec![T::zero(); b.value.len()]).collect(),
            t: 0,
        }
    }
}

/// Bias-corrected Adam update from the accumulated gradients. Rejects the
/// whole step, leaving parameters and moments untouched, when any gradient
/// is non-finite.
pub fn adam_step<T: Real>(params: &mut ParamSet<T>, state: &mut AdamState<T>, lr: f64, cfg: &AdamConfig) -> Result<()> {
    for b in &params.blocks {
        if let Some(i) = b.grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient in block '{}' at index {i}; step rejected",
                b.name
            )));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (T::lift(cfg.beta1), T::lift(cfg.beta2));
    for (k, blk) in params.blocks.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for i in 0..blk.value.len() {
            let g = blk.grad[i];
            m[i] = b1 * m[i] + (T::one() - b1) * g;
            v[i] = b2 * v[i] + (T::one() - b2) * g * g;
            let mh = m[i].as_f64() / c1;
            let vh = v[i].as_f64() / c2;
            blk.value[i] = T::lift(blk.value[i].as_f64() - lr * mh / (vh.sqrt() + cfg.eps));
        }
    }
    Ok(())
}
