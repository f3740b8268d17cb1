use std::collections::BTreeMap;

use super::params::ParamTensors;
use super::spec::{pool_tap_name, ModelSpec};
use crate::autodiff::{Array, Tensor};
use crate::error::{Error, Result};

/// Logits plus every tapped post-activation map of one forward pass.
///
/// The tap tensors are the very nodes the rest of the network consumes, so
/// gradients taken with respect to them are gradients of the logits.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub logits: Tensor,
    pub taps: BTreeMap<String, Tensor>,
}

impl ForwardTrace {
    pub fn tap(&self, name: &str) -> Result<&Tensor> {
        self.taps
            .get(name)
            .ok_or_else(|| Error::invalid(format!("layer {name:?} is not tapped")))
    }
}

fn param<'a>(params: &'a ParamTensors, name: &str) -> Result<&'a Tensor> {
    params
        .get(name)
        .ok_or_else(|| Error::invalid(format!("missing parameter {name}")))
}

pub fn forward(spec: &ModelSpec, params: &ParamTensors, batch: &Tensor) -> Result<ForwardTrace> {
    let (c, h, w) = spec.input;
    match batch.shape() {
        [_, bc, bh, bw] if (*bc, *bh, *bw) == (c, h, w) => {}
        other => {
            return Err(Error::ShapeMismatch {
                op: "forward input",
                lhs: other.to_vec(),
                rhs: vec![0, c, h, w],
            })
        }
    }
    let n = batch.shape()[0];
    let mut taps = BTreeMap::new();
    let mut x = batch.clone();
    for b in &spec.blocks {
        let weight = param(params, &format!("{}.weight", b.name))?;
        let bias = if spec.bias {
            Some(param(params, &format!("{}.bias", b.name))?)
        } else {
            None
        };
        x = x.conv2d(weight, bias, b.conv.stride, b.conv.padding)?.relu()?;
        taps.insert(b.name.clone(), x.clone());
        if let Some(p) = b.pool {
            x = x.maxpool2d(p.kernel, p.stride)?;
            taps.insert(pool_tap_name(&b.name), x.clone());
        }
    }
    let features: usize = x.shape()[1..].iter().product();
    let flat = x.reshape(vec![n, features])?;
    let mut logits = flat.matmul(param(params, "dense.weight")?)?;
    if spec.bias {
        logits = logits.add(param(params, "dense.bias")?)?;
    }
    Ok(ForwardTrace { logits, taps })
}

/// Stacks single-channel `H×W` images into an `N×1×H×W` batch.
pub fn stack_images<'a>(images: impl IntoIterator<Item = &'a Array>) -> Result<Array> {
    let mut data = Vec::new();
    let mut hw: Option<Vec<usize>> = None;
    let mut n = 0;
    for img in images {
        match &hw {
            None => hw = Some(img.shape().to_vec()),
            Some(s) if s.as_slice() != img.shape() => {
                return Err(Error::ShapeMismatch {
                    op: "stack_images",
                    lhs: s.clone(),
                    rhs: img.shape().to_vec(),
                })
            }
            Some(_) => {}
        }
        data.extend_from_slice(img.data());
        n += 1;
    }
    let hw = hw.ok_or_else(|| Error::invalid("empty batch"))?;
    let mut shape = vec![n, 1];
    shape.extend_from_slice(&hw);
    Array::new(shape, data)
}

/// Index of the largest logit per row (first on ties).
pub fn predictions(logits: &Array) -> Vec<usize> {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
