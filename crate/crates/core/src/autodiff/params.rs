use super::real::Real;
use crate::error::{Error, Result};

/// Handle of a parameter block inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named dense block with a gradient accumulator of the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock<T> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<T> {
    pub blocks: Vec<ParamBlock<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self { blocks: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, value: Vec<T>) -> ParamId {
        assert_eq!(value.len(), rows * cols, "parameter block size");
        self.blocks.push(ParamBlock {
            name: name.into(),
            rows,
            cols,
            grad: vec![T::zero(); value.len()],
            value,
        });
        ParamId(self.blocks.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &ParamBlock<T> {
        &self.blocks[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ParamBlock<T> {
        &mut self.blocks[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.blocks.iter().position(|b| b.name == name).map(ParamId)
    }

    pub fn zero_grad(&mut self) {
        for b in &mut self.blocks {
            b.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.value.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn grad_norm(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.grad.iter())
            .map(|g| g.as_f64() * g.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    pub fn check_finite(&self) -> Result<()> {
        for b in &self.blocks {
            if b.value.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("parameter block '{}' holds non-finite values", b.name)));
            }
        }
        Ok(())
    }

    /// Same blocks converted to another precision (gradients reset).
    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            blocks: self
                .blocks
                .iter()
                .map(|b| ParamBlock {
                    name: b.name.clone(),
                    rows: b.rows,
                    cols: b.cols,
                    value: b.value.iter().map(|v| U::lift(v.as_f64())).collect(),
                    grad: vec![U::zero(); b.value.len()],
                })
                .collect(),
        }
    }
}
