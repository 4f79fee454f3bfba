//! Reverse-mode tape over batched matrix operations.

use std::collections::BTreeMap;

use super::matrix::Matrix;
use super::params::{ParamId, ParamSet};
use super::real::Real;
use crate::error::{domain_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op {
    Input,
    Linear { x: NodeId, w: ParamId, b: ParamId },
    Relu(NodeId),
    Softplus(NodeId),
    Sigmoid(NodeId),
    ScaledTanh { x: NodeId, scale: f64 },
    StopGradient,
    Concat(Vec<NodeId>),
    Columns { x: NodeId, start: usize },
    /// A `1 x c` parameter repeated over `rows`.
    Broadcast { p: ParamId },
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op,
    value: Matrix<T>,
    needs_grad: bool,
}

/// Records forward operations for one backward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

/// Gradients with respect to inputs created by [`Tape::input_with_grad`].
#[derive(Clone, Debug, Default)]
pub struct InputGrads<T> {
    grads: BTreeMap<NodeId, Matrix<T>>,
}

impl<T: Real> InputGrads<T> {
    pub fn get(&self, id: NodeId) -> Option<&Matrix<T>> {
        self.grads.get(&id)
    }
}

pub fn softplus<T: Real>(x: T) -> T {
    let v = x.as_f64();
    T::lift(if v > 30.0 { v } else { v.exp().ln_1p() })
}

pub fn sigmoid<T: Real>(x: T) -> T {
    let v = x.as_f64();
    T::lift(if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    })
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    fn push(&mut self, op: Op, value: Matrix<T>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { op, value, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn value(&self, id: NodeId) -> &Matrix<T> {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Fingerprint of which rectifier outputs are active. Two evaluations
    /// with equal signatures took the same linear pieces.
    pub fn relu_signature(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for node in &self.nodes {
            if let Op::Relu(_) = node.op {
                for v in &node.value.data {
                    h = (h ^ u64::from(*v > T::zero())).wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, m: Matrix<T>) -> NodeId {
        self.push(Op::Input, m, false)
    }

    /// Input whose gradient is reported by [`Tape::backward`].
    pub fn input_with_grad(&mut self, m: Matrix<T>) -> NodeId {
        self.push(Op::Input, m, true)
    }

    /// `x W + b` with `W` of shape `in x out` and `b` of shape `1 x out`.
    pub fn linear(&mut self, params: &ParamSet<T>, x: NodeId, w: ParamId, b: ParamId) -> Result<NodeId> {
        let (wb, bb) = (params.get(w), params.get(b));
        let xv = self.value(x);
        if xv.cols != wb.rows || bb.rows * bb.cols != wb.cols {
            return Err(domain_err!(
                "linear layer '{}' expects {} inputs, got {}",
                wb.name,
                wb.rows,
                xv.cols
            ));
        }
        let mut out = Matrix::zeros(xv.rows, wb.cols);
        for r in 0..out.rows {
            out.row_mut(r).copy_from_slice(&bb.value);
        }
        T::gemm(xv.rows, wb.rows, wb.cols, &xv.data, false, &wb.value, false, T::one(), &mut out.data);
        Ok(self.push(Op::Linear { x, w, b }, out, true))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|a| a.max(T::zero()));
        let n = self.needs(x);
        self.push(Op::Relu(x), v, n)
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(softplus);
        let n = self.needs(x);
        self.push(Op::Softplus(x), v, n)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(sigmoid);
        let n = self.needs(x);
        self.push(Op::Sigmoid(x), v, n)
    }

    /// `scale * tanh(x)`.
    pub fn scaled_tanh(&mut self, x: NodeId, scale: f64) -> NodeId {
        let s = T::lift(scale);
        let v = self.value(x).map(|a| s * a.tanh());
        let n = self.needs(x);
        self.push(Op::ScaledTanh { x, scale }, v, n)
    }

    /// Identity forward, zero backward.
    pub fn stop_gradient(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).clone();
        self.push(Op::StopGradient, v, false)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let v = Matrix::hcat(&parts.iter().map(|&p| self.value(p)).collect::<Vec<_>>());
        let n = parts.iter().any(|&p| self.needs(p));
        self.push(Op::Concat(parts.to_vec()), v, n)
    }

    pub fn columns(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.value(x).columns(start, len);
        let n = self.needs(x);
        self.push(Op::Columns { x, start }, v, n)
    }

    pub fn broadcast(&mut self, params: &ParamSet<T>, p: ParamId, rows: usize) -> NodeId {
        let blk = params.get(p);
        let mut v = Matrix::zeros(rows, blk.value.len());
        for r in 0..rows {
            v.row_mut(r).copy_from_slice(&blk.value);
        }
        self.push(Op::Broadcast { p }, v, true)
    }

    /// Propagates `seeds` (gradients of the objective with respect to the
    /// given nodes) back through the recorded operations, accumulating into
    /// `params`. A tape supports a single backward pass.
    pub fn backward(&mut self, params: &mut ParamSet<T>, seeds: &[(NodeId, Matrix<T>)]) -> Result<InputGrads<T>> {
        if self.consumed {
            return Err(Error::State("tape already consumed by a backward pass".into()));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Matrix<T>>> = vec![None; self.nodes.len()];
        for (id, g) in seeds {
            let v = self.value(*id);
            if (g.rows, g.cols) != (v.rows, v.cols) {
                return Err(domain_err!("seed shape {}x{} does not match node {}x{}", g.rows, g.cols, v.rows, v.cols));
            }
            accumulate(&mut grads[id.0], g.clone());
        }
        let mut inputs = InputGrads::default();
        for i in (0..self.nodes.len()).rev() {
            let Some(dy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Input => {
                    inputs.grads.insert(NodeId(i), dy);
                }
                Op::Linear { x, w, b } => {
                    let xv = &self.nodes[x.0].value;
                    let (m, k, n) = (xv.rows, xv.cols, dy.cols);
                    {
                        let wb = params.get_mut(*w);
                        T::gemm(k, m, n, &xv.data, true, &dy.data, false, T::one(), &mut wb.grad);
                    }
                    {
                        let bb = params.get_mut(*b);
                        for r in 0..m {
                            for (g, &d) in bb.grad.iter_mut().zip(dy.row(r)) {
                                *g = *g + d;
                            }
                        }
                    }
                    if self.nodes[x.0].needs_grad {
                        let mut dx = Matrix::zeros(m, k);
                        T::gemm(m, n, k, &dy.data, false, &params.get(*w).value, true, T::zero(), &mut dx.data);
                        accumulate(&mut grads[x.0], dx);
                    }
                }
                Op::Relu(x) => {
                    let mut dx = dy;
                    for (d, &y) in dx.data.iter_mut().zip(&node.value.data) {
                        if y <= T::zero() {
                            *d = T::zero();
                        }
                    }
                    accumulate(&mut grads[x.0], dx);
                }
                Op::Softplus(x) => {
                    let mut dx = dy;
                    for (d, &a) in dx.data.iter_mut().zip(&self.nodes[x.0].value.data) {
                        *d = *d * sigmoid(a);
                    }
                    accumulate(&mut grads[x.0], dx);
                }
                Op::Sigmoid(x) => {
                    let mut dx = dy;
                    for (d, &y) in dx.data.iter_mut().zip(&node.value.data) {
                        *d = *d * y * (T::one() - y);
                    }
                    accumulate(&mut grads[x.0], dx);
                }
                Op::ScaledTanh { x, scale } => {
                    let s = T::lift(*scale);
                    let mut dx = dy;
                    for (d, &a) in dx.data.iter_mut().zip(&self.nodes[x.0].value.data) {
                        let t = a.tanh();
                        *d = *d * s * (T::one() - t * t);
                    }
                    accumulate(&mut grads[x.0], dx);
                }
                Op::StopGradient => {}
                Op::Concat(parts) => {
                    let mut c0 = 0;
                    for p in parts {
                        let w = self.nodes[p.0].value.cols;
                        if self.nodes[p.0].needs_grad {
                            accumulate(&mut grads[p.0], dy.columns(c0, w));
                        }
                        c0 += w;
                    }
                }
                Op::Columns { x, start } => {
                    let xv = &self.nodes[x.0].value;
                    let mut dx = Matrix::zeros(xv.rows, xv.cols);
                    for r in 0..xv.rows {
                        dx.row_mut(r)[*start..*start + dy.cols].copy_from_slice(dy.row(r));
                    }
                    accumulate(&mut grads[x.0], dx);
                }
                Op::Broadcast { p } => {
                    let blk = params.get_mut(*p);
                    for r in 0..dy.rows {
                        for (g, &d) in blk.grad.iter_mut().zip(dy.row(r)) {
                            *g = *g + d;
                        }
                    }
                }
            }
        }
        Ok(inputs)
    }
}

fn accumulate<T: Real>(slot: &mut Option<Matrix<T>>, g: Matrix<T>) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}
