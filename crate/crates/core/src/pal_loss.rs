//! Privileged attribution loss: negative standardized cross-correlation
//! between a (reduced) attribution map and a standardized prior, plus the
//! total training objective.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Array, Tensor};
use crate::error::{Error, Result};
use crate::prior::PriorHeatmap;

/// Lower bound applied to the per-channel standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

fn dims(a: &[usize]) -> Result<[usize; 4]> {
    match *a {
        [n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(Error::invalid(format!("expected N×C×H×W, got {a:?}"))),
    }
}

/// Per-sample, per-channel z-score over spatial positions, using the
/// population standard deviation floored at [`STD_FLOOR`]. A constant
/// channel maps to zeros.
pub fn standardize_attr(a: &Tensor) -> Result<Tensor> {
    dims(a.shape())?;
    let centered = a.sub(&a.mean_axes(&[2, 3])?)?;
    let var = centered.mul(&centered)?.mean_axes(&[2, 3])?;
    let std = var.sqrt()?.clamp_min(STD_FLOOR)?;
    centered.div(&std)
}

/// Stacks per-sample standardized priors into `N×1×h×w`.
pub fn stack_priors(priors: &[PriorHeatmap]) -> Result<Array> {
    let first = priors.first().ok_or_else(|| Error::invalid("no priors"))?;
    let (h, w) = first.resolution();
    let mut data = Vec::with_capacity(priors.len() * h * w);
    for p in priors {
        if !p.standardized {
            return Err(Error::invalid("prior must be standardized"));
        }
        if p.resolution() != (h, w) {
            return Err(Error::ShapeMismatch {
                op: "stack_priors",
                lhs: vec![h, w],
                rhs: p.values.shape().to_vec(),
            });
        }
        data.extend_from_slice(p.values.data());
    }
    Array::new(vec![priors.len(), 1, h, w], data)
}

/// `-Σ_{i,j,c} z(a)_{i,j,c} · a*_{i,j}`, averaged over the batch and divided
/// by the channel count. The prior is shared by every channel.
pub fn pal_loss(a: &Tensor, priors: &[PriorHeatmap]) -> Result<Tensor> {
    let [n, c, h, w] = dims(a.shape())?;
    if priors.len() != n {
        return Err(Error::invalid(format!("{} priors for a batch of {n}", priors.len())));
    }
    let stacked = stack_priors(priors)?;
    if stacked.shape()[2..] != [h, w] {
        return Err(Error::ShapeMismatch {
            op: "pal_loss resolution",
            lhs: vec![h, w],
            rhs: stacked.shape()[2..].to_vec(),
        });
    }
    let z = standardize_attr(a)?;
    let cross = z.mul(&Tensor::constant(stacked))?.sum_all()?;
    Ok(cross.scale(-1.0 / (n * c) as f64))
}

/// Per-sample Pearson correlation between each channel of `a` and the
/// sample's prior, averaged over channels. Constant channels count as zero.
pub fn attribution_prior_correlation(a: &Array, priors: &[PriorHeatmap]) -> Result<Vec<f64>> {
    let [n, c, h, w] = dims(a.shape())?;
    if priors.len() != n {
        return Err(Error::invalid(format!("{} priors for a batch of {n}", priors.len())));
    }
    let hw = h * w;
    let mut out = Vec::with_capacity(n);
    for (s, prior) in priors.iter().enumerate() {
        if prior.resolution() != (h, w) || !prior.standardized {
            return Err(Error::invalid("prior must be standardized at the attribution resolution"));
        }
        let p = prior.values.data();
        let mut total = 0.0;
        for ch in 0..c {
            let x = &a.data()[(s * c + ch) * hw..][..hw];
            let mean = x.iter().sum::<f64>() / hw as f64;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / hw as f64;
            let std = var.sqrt().max(STD_FLOOR);
            total += x.iter().zip(p).map(|(v, q)| (v - mean) / std * q).sum::<f64>() / hw as f64;
        }
        out.push(total / c as f64);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub pal: f64,
    pub total: f64,
    pub lambda: f64,
}

/// `ce + λ·pal`, with its scalar breakdown.
pub fn total_loss(ce: &Tensor, pal: &Tensor, lambda: f64) -> Result<(Tensor, LossBreakdown)> {
    let (ce_v, pal_v) = (ce.item()?, pal.item()?);
    if !ce_v.is_finite() || !pal_v.is_finite() || !lambda.is_finite() {
        return Err(Error::NonFinite(format!("loss components ce={ce_v} pal={pal_v} lambda={lambda}")));
    }
    let total = ce.add(&pal.scale(lambda))?;
    let breakdown = LossBreakdown {
        ce: ce_v,
        pal: pal_v,
        total: total.item()?,
        lambda,
    };
    Ok((total, breakdown))
}
