//! Gradient-based attribution maps at a tapped feature map, and the channel
//! strategies that reduce them before they are compared with a prior.
//!
//! All maps are laid out `N×C×H×W`, one `C×H×W` block per sample.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{backward, Array, Tensor};
use crate::backbone::ForwardTrace;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionMethod {
    /// `|∂Σf_o/∂f^l|`
    Grad,
    /// `|∂Σf_o/∂f^l| · f^l`
    GradInput,
}

impl AttributionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            AttributionMethod::Grad => "grad",
            AttributionMethod::GradInput => "grad_input",
        }
    }
}

impl fmt::Display for AttributionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttributionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grad" => Ok(AttributionMethod::Grad),
            "grad_input" | "gradinput" | "grad*input" => Ok(AttributionMethod::GradInput),
            other => Err(Error::invalid(format!("unknown attribution method {other:?}"))),
        }
    }
}

/// Which attribution channels are constrained, and how they are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ChannelStrategy {
    AllChannels,
    Mean,
    /// Mean over the first `c1` channels; `None` means `⌊C/2⌋`.
    MeanOfHalf(Option<usize>),
}

impl ChannelStrategy {
    pub fn mean_of_half() -> Self {
        ChannelStrategy::MeanOfHalf(None)
    }

    /// Number of constrained channels out of `c`.
    pub fn constrained(self, c: usize) -> Result<usize> {
        match self {
            ChannelStrategy::AllChannels | ChannelStrategy::Mean => Ok(c),
            ChannelStrategy::MeanOfHalf(c1) => {
                let c1 = c1.unwrap_or(c / 2);
                if c1 == 0 || c1 >= c {
                    return Err(Error::invalid(format!(
                        "mean-of-half needs 1 <= C1 < C, got C1={c1}, C={c}"
                    )));
                }
                Ok(c1)
            }
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            ChannelStrategy::AllChannels => "all",
            ChannelStrategy::Mean => "mean",
            ChannelStrategy::MeanOfHalf(_) => "mean_of_half",
        }
    }
}

impl fmt::Display for ChannelStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelStrategy::MeanOfHalf(Some(c1)) => write!(f, "mean_of_half:{c1}"),
            s => f.write_str(s.slug()),
        }
    }
}

impl FromStr for ChannelStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" | "all_channels" => Ok(ChannelStrategy::AllChannels),
            "mean" => Ok(ChannelStrategy::Mean),
            "mean_of_half" | "half" => Ok(ChannelStrategy::MeanOfHalf(None)),
            other => match other.strip_prefix("mean_of_half:") {
                Some(n) => n
                    .parse()
                    .map(|c1| ChannelStrategy::MeanOfHalf(Some(c1)))
                    .map_err(|_| Error::invalid(format!("bad C1 in {other:?}"))),
                None => Err(Error::invalid(format!("unknown channel strategy {other:?}"))),
            },
        }
    }
}

impl TryFrom<String> for ChannelStrategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ChannelStrategy> for String {
    fn from(s: ChannelStrategy) -> String {
        s.to_string()
    }
}

#[derive(Clone, Debug)]
pub struct AttributionMap {
    /// `N×C×H×W`, non-negative.
    pub values: Tensor,
    pub layer: String,
    pub method: AttributionMethod,
}

/// Per-sample sum of logits, shape `[N]`.
pub fn sum_logits(trace: &ForwardTrace) -> Result<Tensor> {
    let n = trace.logits.shape()[0];
    trace.logits.sum_axes(&[1])?.reshape(vec![n])
}

/// Signed `∂Σf_o/∂f^l` for every sample.
///
/// Samples never interact in the forward pass, so differentiating the sum of
/// the per-sample scalars yields each sample's own gradient.
pub fn tap_gradient(trace: &ForwardTrace, layer: &str, create_graph: bool) -> Result<Tensor> {
    let tap = trace.tap(layer)?;
    if !tap.is_tracked() {
        return Err(Error::Tape(format!("tap {layer:?} is not on a tape")));
    }
    let total = sum_logits(trace)?.sum_all()?;
    Ok(backward(&total, &[tap], create_graph)?.remove(0))
}

pub fn grad_attribution(trace: &ForwardTrace, layer: &str, create_graph: bool) -> Result<AttributionMap> {
    let g = tap_gradient(trace, layer, create_graph)?;
    Ok(AttributionMap {
        values: g.abs()?,
        layer: layer.to_string(),
        method: AttributionMethod::Grad,
    })
}

pub fn grad_input_attribution(trace: &ForwardTrace, layer: &str, create_graph: bool) -> Result<AttributionMap> {
    let g = tap_gradient(trace, layer, create_graph)?;
    let tap = trace.tap(layer)?;
    let tap = if create_graph { tap.clone() } else { tap.detach() };
    Ok(AttributionMap {
        values: g.abs()?.mul(&tap)?,
        layer: layer.to_string(),
        method: AttributionMethod::GradInput,
    })
}

pub fn attribute(
    trace: &ForwardTrace,
    layer: &str,
    method: AttributionMethod,
    create_graph: bool,
) -> Result<AttributionMap> {
    match method {
        AttributionMethod::Grad => grad_attribution(trace, layer, create_graph),
        AttributionMethod::GradInput => grad_input_attribution(trace, layer, create_graph),
    }
}

fn channel_mask(c: usize, range: std::ops::Range<usize>) -> Tensor {
    let mask = (0..c).map(|i| if range.contains(&i) { 1.0 } else { 0.0 }).collect();
    Tensor::constant(Array::new(vec![1, c, 1, 1], mask).expect("mask length"))
}

fn channels_of(a: &Tensor) -> Result<usize> {
    match *a.shape() {
        [_, c, _, _] => Ok(c),
        _ => Err(Error::invalid(format!("attribution must be N×C×H×W, got {:?}", a.shape()))),
    }
}

/// Reduces `N×C×H×W` to `N×C_out×H×W` under `strategy`.
pub fn reduce_channels(a: &Tensor, strategy: ChannelStrategy) -> Result<Tensor> {
    let c = channels_of(a)?;
    match strategy {
        ChannelStrategy::AllChannels => Ok(a.clone()),
        ChannelStrategy::Mean => a.mean_axes(&[1]),
        ChannelStrategy::MeanOfHalf(_) => {
            let c1 = strategy.constrained(c)?;
            Ok(a.mul(&channel_mask(c, 0..c1))?.sum_axes(&[1])?.scale(1.0 / c1 as f64))
        }
    }
}

/// Mean over the channels a mean-of-half strategy leaves free.
pub fn reduce_free_channels(a: &Tensor, strategy: ChannelStrategy) -> Result<Tensor> {
    let c = channels_of(a)?;
    let c1 = strategy.constrained(c)?;
    if c1 == c {
        return Err(Error::invalid(format!("strategy {strategy} leaves no channel free")));
    }
    Ok(a.mul(&channel_mask(c, c1..c))?.sum_axes(&[1])?.scale(1.0 / (c - c1) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nchw(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Tensor {
        Tensor::constant(Array::new(vec![n, c, h, w], data).unwrap())
    }

    #[test]
    fn mean_strategy() {
        let a = nchw(1, 2, 1, 1, vec![1.0, 3.0]);
        assert_eq!(reduce_channels(&a, ChannelStrategy::Mean).unwrap().data(), &[2.0]);
    }

    #[test]
    fn mean_of_half_ignores_tail_channels() {
        let a = nchw(1, 4, 1, 1, vec![1.0, 2.0, 3.0, 4.0]);
        let b = nchw(1, 4, 1, 1, vec![1.0, 2.0, 100.0, 4.0]);
        let s = ChannelStrategy::MeanOfHalf(Some(2));
        assert_eq!(reduce_channels(&a, s).unwrap().data(), &[1.5]);
        assert_eq!(reduce_channels(&b, s).unwrap().data(), &[1.5]);
        assert_eq!(reduce_free_channels(&a, s).unwrap().data(), &[3.5]);
    }

    #[test]
    fn strategy_parsing_and_bounds() {
        assert_eq!("mean_of_half:3".parse::<ChannelStrategy>().unwrap(), ChannelStrategy::MeanOfHalf(Some(3)));
        assert_eq!("all".parse::<ChannelStrategy>().unwrap(), ChannelStrategy::AllChannels);
        assert!("weird".parse::<ChannelStrategy>().is_err());
        assert_eq!(ChannelStrategy::mean_of_half().constrained(32).unwrap(), 16);
        assert!(ChannelStrategy::MeanOfHalf(Some(4)).constrained(4).is_err());
        assert!(ChannelStrategy::MeanOfHalf(Some(0)).constrained(4).is_err());
        assert!(ChannelStrategy::mean_of_half().constrained(1).is_err());
        let json = serde_json::to_string(&ChannelStrategy::MeanOfHalf(Some(3))).unwrap();
        assert_eq!(json, "\"mean_of_half:3\"");
    }
}
