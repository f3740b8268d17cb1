use std::sync::Arc;

use super::array::Array;
use super::kernels::{self, ConvGeom};
use super::ops::Op;
use super::tape::{Input, Tape};
use crate::error::{Error, Result};

#[derive(Clone)]
pub(crate) struct NodeRef {
    pub tape: Tape,
    pub id: usize,
}

/// An [`Array`] value, optionally tracked as a node on a [`Tape`].
///
/// Operations record a node whenever at least one operand is tracked; all
/// tracked operands must live on the same tape.
#[derive(Clone)]
pub struct Tensor {
    value: Array,
    node: Option<NodeRef>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.node {
            Some(n) => write!(f, "Tensor(node {} on gen {}, {:?})", n.id, n.tape.generation(), self.value),
            None => write!(f, "Tensor(untracked, {:?})", self.value),
        }
    }
}

impl From<Array> for Tensor {
    fn from(a: Array) -> Self {
        Tensor::constant(a)
    }
}

impl Tensor {
    pub fn constant(value: Array) -> Self {
        Tensor { value, node: None }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::constant(Array::scalar(v))
    }

    pub(crate) fn tracked(value: Array, tape: Tape, id: usize) -> Self {
        Tensor {
            value,
            node: Some(NodeRef { tape, id }),
        }
    }

    pub fn value(&self) -> &Array {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn data(&self) -> &[f64] {
        self.value.data()
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }

    pub fn item(&self) -> Result<f64> {
        self.value.item()
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    pub fn node_id(&self) -> Option<usize> {
        self.node.as_ref().map(|n| n.id)
    }

    pub fn tape(&self) -> Option<&Tape> {
        self.node.as_ref().map(|n| &n.tape)
    }

    pub(crate) fn node_ref(&self) -> Option<&NodeRef> {
        self.node.as_ref()
    }

    /// Same value, no longer tracked.
    pub fn detach(&self) -> Tensor {
        Tensor::constant(self.value.clone())
    }

    pub(crate) fn apply(op: Op, operands: &[&Tensor]) -> Result<Tensor> {
        let vals: Vec<&Array> = operands.iter().map(|t| &t.value).collect();
        let value = op.eval(&vals)?;
        let mut tape: Option<&Tape> = None;
        for t in operands {
            if let Some(n) = &t.node {
                match tape {
                    None => tape = Some(&n.tape),
                    Some(tp) if !tp.same(&n.tape) => {
                        return Err(Error::Tape(format!(
                            "{} mixes tensors from different tapes",
                            op.name()
                        )))
                    }
                    Some(_) => {}
                }
            }
        }
        match tape {
            None => Ok(Tensor::constant(value)),
            Some(tape) => {
                let tape = tape.clone();
                let inputs = operands
                    .iter()
                    .map(|t| match &t.node {
                        Some(n) => Input::Node(n.id),
                        None => Input::Const(t.value.clone()),
                    })
                    .collect();
                let id = tape.push(op, inputs, value.clone());
                Ok(Tensor::tracked(value, tape, id))
            }
        }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        Tensor::apply(Op::Add, &[self, other])
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        Tensor::apply(Op::Sub, &[self, other])
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        Tensor::apply(Op::Mul, &[self, other])
    }

    /// Fails with [`Error::DegenerateDivisor`] when any `|divisor| < 1e-300`.
    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        Tensor::apply(Op::Div, &[self, other])
    }

    pub fn scale(&self, c: f64) -> Tensor {
        Tensor::apply(Op::Scale(c), &[self]).expect("scale of finite values by a finite constant")
    }

    pub fn shift(&self, c: f64) -> Result<Tensor> {
        Tensor::apply(Op::Shift(c), &[self])
    }

    pub fn relu(&self) -> Result<Tensor> {
        Tensor::apply(Op::Relu, &[self])
    }

    /// Absolute value; its derivative at exactly zero is zero.
    pub fn abs(&self) -> Result<Tensor> {
        Tensor::apply(Op::Abs, &[self])
    }

    pub fn exp(&self) -> Result<Tensor> {
        Tensor::apply(Op::Exp, &[self])
    }

    pub fn ln(&self) -> Result<Tensor> {
        Tensor::apply(Op::Log, &[self])
    }

    /// Square root; the derivative at zero is taken as zero.
    pub fn sqrt(&self) -> Result<Tensor> {
        Tensor::apply(Op::Sqrt, &[self])
    }

    pub fn safe_recip(&self) -> Result<Tensor> {
        Tensor::apply(Op::SafeRecip, &[self])
    }

    pub fn clamp_min(&self, c: f64) -> Result<Tensor> {
        Tensor::apply(Op::ClampMin(c), &[self])
    }

    /// Sum over `axes`, keeping reduced axes with extent 1.
    pub fn sum_axes(&self, axes: &[usize]) -> Result<Tensor> {
        Tensor::apply(Op::Sum(axes.to_vec()), &[self])
    }

    pub fn mean_axes(&self, axes: &[usize]) -> Result<Tensor> {
        let n: usize = axes.iter().map(|&a| self.shape().get(a).copied().unwrap_or(1)).product();
        Ok(self.sum_axes(axes)?.scale(1.0 / n as f64))
    }

    /// Sum of all elements as a one-element tensor of shape `[1]`.
    pub fn sum_all(&self) -> Result<Tensor> {
        let axes: Vec<usize> = (0..self.value.rank()).collect();
        self.sum_axes(&axes)?.reshape(vec![1])
    }

    pub fn mean_all(&self) -> Result<Tensor> {
        let n = self.numel() as f64;
        Ok(self.sum_all()?.scale(1.0 / n))
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Tensor> {
        if self.shape() == shape {
            return Ok(self.clone());
        }
        Tensor::apply(Op::BroadcastTo(shape.to_vec()), &[self])
    }

    /// Reduces a broadcast result back to `shape` by summing the broadcast
    /// axes.
    pub fn sum_to(&self, shape: &[usize]) -> Result<Tensor> {
        if self.shape() == shape {
            return Ok(self.clone());
        }
        let rank = self.shape().len();
        if shape.len() > rank {
            return Err(Error::ShapeMismatch {
                op: "sum_to",
                lhs: self.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let offset = rank - shape.len();
        let axes: Vec<usize> = (0..rank)
            .filter(|&i| {
                let target = if i < offset { 1 } else { shape[i - offset] };
                target == 1 && self.shape()[i] != 1
            })
            .collect();
        let summed = if axes.is_empty() {
            self.clone()
        } else {
            self.sum_axes(&axes)?
        };
        if summed.shape() == shape {
            Ok(summed)
        } else {
            summed.reshape(shape.to_vec())
        }
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        if self.shape() == shape.as_slice() {
            return Ok(self.clone());
        }
        Tensor::apply(Op::Reshape(shape), &[self])
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        Tensor::apply(Op::MatMul, &[self, other])
    }

    pub fn transpose(&self) -> Result<Tensor> {
        Tensor::apply(Op::Transpose, &[self])
    }

    /// 2-D cross-correlation of an NCHW input with an O×I×k×k weight.
    pub fn conv2d(&self, weight: &Tensor, bias: Option<&Tensor>, stride: usize, padding: usize) -> Result<Tensor> {
        let y = self.conv2d_geom(weight, ConvGeom { stride, padding })?;
        match bias {
            None => Ok(y),
            Some(b) => {
                let o = weight.shape()[0];
                if b.shape() != [o] {
                    return Err(Error::ShapeMismatch {
                        op: "conv2d bias",
                        lhs: b.shape().to_vec(),
                        rhs: vec![o],
                    });
                }
                y.add(&b.reshape(vec![o, 1, 1])?)
            }
        }
    }

    pub(crate) fn conv2d_geom(&self, weight: &Tensor, geom: ConvGeom) -> Result<Tensor> {
        Tensor::apply(Op::Conv2d(geom), &[self, weight])
    }

    pub(crate) fn conv2d_input_grad(&self, weight: &Tensor, geom: ConvGeom, in_hw: (usize, usize)) -> Result<Tensor> {
        Tensor::apply(Op::Conv2dInputGrad(geom, in_hw), &[self, weight])
    }

    pub(crate) fn conv2d_weight_grad(&self, g: &Tensor, geom: ConvGeom, k: usize) -> Result<Tensor> {
        Tensor::apply(Op::Conv2dWeightGrad(geom, k), &[self, g])
    }

    /// Max pooling over k×k windows with stride `s`. Backward routes the
    /// gradient to the first maximal position of each window.
    pub fn maxpool2d(&self, k: usize, s: usize) -> Result<Tensor> {
        let (index, shape) = kernels::maxpool_indices(&self.value, k, s)?;
        self.gather(index.into(), shape)
    }

    pub(crate) fn gather(&self, index: Arc<[usize]>, out_shape: Vec<usize>) -> Result<Tensor> {
        Tensor::apply(Op::Gather(index, out_shape), &[self])
    }

    pub(crate) fn scatter_add(&self, index: Arc<[usize]>, out_shape: Vec<usize>) -> Result<Tensor> {
        Tensor::apply(Op::ScatterAdd(index, out_shape), &[self])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::constant(Array::from_vec(v.to_vec()))
    }

    #[test]
    fn elementwise_examples() {
        assert_eq!(t(&[1.0, 2.0]).add(&t(&[3.0, 4.0])).unwrap().data(), &[4.0, 6.0]);
        assert_eq!(t(&[1.0, 2.0, 3.0]).mul(&Tensor::scalar(0.0)).unwrap().data(), &[0.0, 0.0, 0.0]);
        let err = t(&[1.0]).div(&t(&[0.0])).unwrap_err();
        assert_eq!(err.to_string(), "degenerate divisor");
        assert!(matches!(
            t(&[1.0, 2.0]).add(&t(&[1.0, 2.0, 3.0])),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn relu_and_pool_examples() {
        assert_eq!(t(&[-1.0, 0.0, 2.0]).relu().unwrap().data(), &[0.0, 0.0, 2.0]);
        let x = Tensor::constant(Array::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let p = x.maxpool2d(2, 2).unwrap();
        assert_eq!(p.shape(), &[1, 1, 1, 1]);
        assert_eq!(p.data(), &[4.0]);
        assert!(x.maxpool2d(3, 1).is_err());
    }

    #[test]
    fn conv_examples() {
        let x = Tensor::constant(Array::full(vec![1, 1, 3, 3], 1.0));
        let w = Tensor::constant(Array::full(vec![1, 1, 2, 2], 1.0));
        let y = x.conv2d(&w, None, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[4.0; 4]);

        let x = Tensor::constant(Array::new(vec![1, 1, 2, 3], vec![1.0, -2.0, 3.0, 4.0, 5.0, -6.0]).unwrap());
        let id = Tensor::constant(Array::full(vec![1, 1, 1, 1], 1.0));
        assert_eq!(x.conv2d(&id, None, 1, 0).unwrap().data(), x.data());

        let w = Tensor::constant(Array::zeros(vec![1, 2, 1, 1]));
        assert!(matches!(x.conv2d(&w, None, 1, 0), Err(Error::ShapeMismatch { .. })));
        let big = Tensor::constant(Array::zeros(vec![1, 1, 5, 5]));
        assert!(x.conv2d(&big, None, 1, 1).is_err());
    }

    #[test]
    fn untracked_ops_leave_no_trace() {
        let tape = Tape::new();
        let a = t(&[1.0, 2.0]);
        let b = a.mul(&a).unwrap();
        assert!(!b.is_tracked());
        assert!(tape.is_empty());
        let x = tape.leaf(Array::from_vec(vec![1.0, 2.0]));
        let y = x.mul(&a).unwrap();
        assert!(y.is_tracked());
        assert_eq!(tape.len(), 2);
    }

    #[test]
    fn mixing_tapes_is_an_error() {
        let (t1, t2) = (Tape::new(), Tape::new());
        let a = t1.leaf(Array::scalar(1.0));
        let b = t2.leaf(Array::scalar(2.0));
        assert!(matches!(a.add(&b), Err(Error::Tape(_))));
    }
}
