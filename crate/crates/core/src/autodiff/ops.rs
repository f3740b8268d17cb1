//! Operation set of the tape: forward evaluation and vector-Jacobian
//! products.
//!
//! Every VJP is written with [`Tensor`] operations from this same set, so
//! running it on tracked operands records a differentiable backward pass.
//! Piecewise selections (relu/abs masks, clamp masks, pooling indices) enter
//! the backward pass as constants: they are locally constant almost
//! everywhere, which makes their own derivative zero.

use std::sync::Arc;

use super::array::{self, Array};
use super::kernels::{self, ConvGeom};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Smallest divisor magnitude accepted by `div`.
pub const MIN_DIVISOR: f64 = 1e-300;

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Scale(f64),
    Shift(f64),
    Relu,
    Abs,
    Exp,
    Log,
    Sqrt,
    /// `1/x`, with `0` mapped to `0`.
    SafeRecip,
    ClampMin(f64),
    Sum(Vec<usize>),
    BroadcastTo(Vec<usize>),
    Reshape(Vec<usize>),
    MatMul,
    Transpose,
    Conv2d(ConvGeom),
    Conv2dInputGrad(ConvGeom, (usize, usize)),
    Conv2dWeightGrad(ConvGeom, usize),
    Gather(Arc<[usize]>, Vec<usize>),
    ScatterAdd(Arc<[usize]>, Vec<usize>),
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Scale(_) => "scale",
            Op::Shift(_) => "shift",
            Op::Relu => "relu",
            Op::Abs => "abs",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Sqrt => "sqrt",
            Op::SafeRecip => "safe_recip",
            Op::ClampMin(_) => "clamp_min",
            Op::Sum(_) => "sum",
            Op::BroadcastTo(_) => "broadcast_to",
            Op::Reshape(_) => "reshape",
            Op::MatMul => "matmul",
            Op::Transpose => "transpose",
            Op::Conv2d(_) => "conv2d",
            Op::Conv2dInputGrad(..) => "conv2d_input_grad",
            Op::Conv2dWeightGrad(..) => "conv2d_weight_grad",
            Op::Gather(..) => "gather",
            Op::ScatterAdd(..) => "scatter_add",
        }
    }

    pub(crate) fn eval(&self, x: &[&Array]) -> Result<Array> {
        let out = match self {
            Op::Leaf => return Err(Error::Tape("leaf nodes are not evaluated".into())),
            Op::Add => array::broadcast_binary("add", x[0], x[1], |a, b| a + b)?,
            Op::Sub => array::broadcast_binary("sub", x[0], x[1], |a, b| a - b)?,
            Op::Mul => array::broadcast_binary("mul", x[0], x[1], |a, b| a * b)?,
            Op::Div => {
                if x[1].data().iter().any(|b| b.abs() < MIN_DIVISOR) {
                    return Err(Error::DegenerateDivisor);
                }
                array::broadcast_binary("div", x[0], x[1], |a, b| a / b)?
            }
            Op::Scale(c) => x[0].map(|v| v * c),
            Op::Shift(c) => x[0].map(|v| v + c),
            Op::Relu => x[0].map(|v| if v > 0.0 { v } else { 0.0 }),
            Op::Abs => x[0].map(f64::abs),
            Op::Exp => x[0].map(f64::exp),
            Op::Log => {
                if x[0].data().iter().any(|&v| v <= 0.0) {
                    return Err(Error::invalid("log of a non-positive value"));
                }
                x[0].map(f64::ln)
            }
            Op::Sqrt => {
                if x[0].data().iter().any(|&v| v < 0.0) {
                    return Err(Error::invalid("sqrt of a negative value"));
                }
                x[0].map(f64::sqrt)
            }
            Op::SafeRecip => x[0].map(|v| if v == 0.0 { 0.0 } else { 1.0 / v }),
            Op::ClampMin(c) => x[0].map(|v| if v > *c { v } else { *c }),
            Op::Sum(axes) => array::sum_keepdim(x[0], axes)?,
            Op::BroadcastTo(shape) => array::broadcast_to(x[0], shape)?,
            Op::Reshape(shape) => x[0].reshape(shape.clone())?,
            Op::MatMul => kernels::matmul(x[0], x[1])?,
            Op::Transpose => kernels::transpose(x[0])?,
            Op::Conv2d(geom) => kernels::conv2d(x[0], x[1], *geom)?,
            Op::Conv2dInputGrad(geom, hw) => kernels::conv2d_input_grad(x[0], x[1], *geom, *hw)?,
            Op::Conv2dWeightGrad(geom, k) => kernels::conv2d_weight_grad(x[0], x[1], *geom, *k)?,
            Op::Gather(index, shape) => kernels::gather(x[0], index, shape)?,
            Op::ScatterAdd(index, shape) => kernels::scatter_add(x[0], index, shape)?,
        };
        if !out.all_finite() {
            return Err(Error::NonFinite(self.name().to_string()));
        }
        Ok(out)
    }

    /// Gradients with respect to each input given upstream `g`. Entries for
    /// which `needs[i]` is false may be skipped (returned as `None`).
    pub(crate) fn vjp(
        &self,
        x: &[Tensor],
        out: &Tensor,
        g: &Tensor,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor>>> {
        let need = |i: usize| needs.get(i).copied().unwrap_or(false);
        let grads = match self {
            Op::Leaf => vec![],
            Op::Add => vec![
                need(0).then(|| g.sum_to(x[0].shape())).transpose()?,
                need(1).then(|| g.sum_to(x[1].shape())).transpose()?,
            ],
            Op::Sub => vec![
                need(0).then(|| g.sum_to(x[0].shape())).transpose()?,
                need(1)
                    .then(|| g.scale(-1.0).sum_to(x[1].shape()))
                    .transpose()?,
            ],
            Op::Mul => vec![
                need(0)
                    .then(|| g.mul(&x[1])?.sum_to(x[0].shape()))
                    .transpose()?,
                need(1)
                    .then(|| g.mul(&x[0])?.sum_to(x[1].shape()))
                    .transpose()?,
            ],
            Op::Div => vec![
                need(0)
                    .then(|| g.div(&x[1])?.sum_to(x[0].shape()))
                    .transpose()?,
                need(1)
                    .then(|| g.mul(out)?.div(&x[1])?.scale(-1.0).sum_to(x[1].shape()))
                    .transpose()?,
            ],
            Op::Scale(c) => vec![Some(g.scale(*c))],
            Op::Shift(_) => vec![Some(g.clone())],
            Op::Relu => {
                let mask = x[0].value().map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                vec![Some(g.mul(&Tensor::constant(mask))?)]
            }
            Op::Abs => {
                let sign = x[0].value().map(|v| {
                    if v > 0.0 {
                        1.0
                    } else if v < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                });
                vec![Some(g.mul(&Tensor::constant(sign))?)]
            }
            Op::Exp => vec![Some(g.mul(out)?)],
            Op::Log => vec![Some(g.div(&x[0])?)],
            Op::Sqrt => vec![Some(g.mul(&out.safe_recip()?.scale(0.5))?)],
            Op::SafeRecip => vec![Some(g.mul(&out.mul(out)?)?.scale(-1.0))],
            Op::ClampMin(c) => {
                let mask = x[0].value().map(|v| if v > *c { 1.0 } else { 0.0 });
                vec![Some(g.mul(&Tensor::constant(mask))?)]
            }
            Op::Sum(_) => vec![Some(g.broadcast_to(x[0].shape())?)],
            Op::BroadcastTo(_) => vec![Some(g.sum_to(x[0].shape())?)],
            Op::Reshape(_) => vec![Some(g.reshape(x[0].shape().to_vec())?)],
            Op::MatMul => vec![
                need(0)
                    .then(|| g.matmul(&x[1].transpose()?))
                    .transpose()?,
                need(1)
                    .then(|| x[0].transpose()?.matmul(g))
                    .transpose()?,
            ],
            Op::Transpose => vec![Some(g.transpose()?)],
            Op::Conv2d(geom) => {
                let in_hw = (x[0].shape()[2], x[0].shape()[3]);
                let k = x[1].shape()[2];
                vec![
                    need(0)
                        .then(|| g.conv2d_input_grad(&x[1], *geom, in_hw))
                        .transpose()?,
                    need(1)
                        .then(|| x[0].conv2d_weight_grad(g, *geom, k))
                        .transpose()?,
                ]
            }
            // out = A(g0, w), the input-adjoint of conv in its first slot.
            Op::Conv2dInputGrad(geom, _) => {
                let k = x[1].shape()[2];
                vec![
                    need(0).then(|| g.conv2d_geom(&x[1], *geom)).transpose()?,
                    need(1)
                        .then(|| g.conv2d_weight_grad(&x[0], *geom, k))
                        .transpose()?,
                ]
            }
            // out = B(x, g0), the weight-adjoint of conv.
            Op::Conv2dWeightGrad(geom, _) => {
                let in_hw = (x[0].shape()[2], x[0].shape()[3]);
                vec![
                    need(0)
                        .then(|| x[1].conv2d_input_grad(g, *geom, in_hw))
                        .transpose()?,
                    need(1).then(|| x[0].conv2d_geom(g, *geom)).transpose()?,
                ]
            }
            Op::Gather(index, _) => {
                vec![Some(g.scatter_add(index.clone(), x[0].shape().to_vec())?)]
            }
            Op::ScatterAdd(index, _) => {
                vec![Some(g.gather(index.clone(), x[0].shape().to_vec())?)]
            }
        };
        Ok(grads)
    }
}
