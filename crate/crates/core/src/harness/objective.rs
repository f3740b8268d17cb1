//! The training objective shared by the trainer and the gradient checker.

use crate::attribution::{attribute, reduce_channels, AttributionMethod, ChannelStrategy};
use crate::autodiff::{Array, Tensor};
use crate::backbone::{forward, softmax_cross_entropy, stack_images, ModelSpec, ParamTensors};
use crate::data::Sample;
use crate::error::Result;
use crate::pal_loss::{pal_loss, total_loss, LossBreakdown};
use crate::prior::{build_prior, LandmarkSet, PriorHeatmap};

/// Images stacked `N×1×H×W` with their labels and landmarks.
#[derive(Clone, Debug)]
pub struct Batch {
    pub images: Array,
    pub labels: Vec<usize>,
    pub landmarks: Vec<LandmarkSet>,
}

impl Batch {
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Result<Self> {
        let samples: Vec<&Sample> = samples.into_iter().collect();
        Ok(Batch {
            images: stack_images(samples.iter().map(|s| &s.image))?,
            labels: samples.iter().map(|s| s.label).collect(),
            landmarks: samples.iter().map(|s| s.landmarks.clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// What the prior term constrains and how strongly.
#[derive(Clone, Debug, PartialEq)]
pub struct PalTerm {
    pub tap: String,
    pub method: AttributionMethod,
    pub strategy: ChannelStrategy,
    pub lambda: f64,
    pub sigma: f64,
}

/// Standardized priors for every sample at the resolution of `tap`.
pub fn batch_priors(spec: &ModelSpec, tap: &str, landmarks: &[LandmarkSet], sigma: f64) -> Result<Vec<PriorHeatmap>> {
    let info = spec.tap(tap)?;
    let (_, h, w) = spec.input;
    landmarks
        .iter()
        .map(|l| build_prior(l, (h, w), (info.height, info.width), sigma))
        .collect()
}

/// Cross-entropy plus, when `pal` is set, `λ·PAL` at the tap.
///
/// The prior term is differentiated through (double backprop) only when
/// `λ > 0`; at `λ = 0` it is evaluated for logging and the returned tensor
/// is the cross-entropy node itself.
pub fn objective(
    spec: &ModelSpec,
    params: &ParamTensors,
    batch: &Batch,
    pal: Option<&PalTerm>,
) -> Result<(Tensor, LossBreakdown)> {
    let trace = forward(spec, params, &Tensor::constant(batch.images.clone()))?;
    let ce = softmax_cross_entropy(&trace.logits, &batch.labels)?;
    let Some(term) = pal else {
        let v = ce.item()?;
        return Ok((
            ce,
            LossBreakdown {
                ce: v,
                pal: 0.0,
                total: v,
                lambda: 0.0,
            },
        ));
    };
    let differentiate = term.lambda > 0.0;
    let attr = attribute(&trace, &term.tap, term.method, differentiate)?;
    let reduced = reduce_channels(&attr.values, term.strategy)?;
    let priors = batch_priors(spec, &term.tap, &batch.landmarks, term.sigma)?;
    let pal_value = pal_loss(&reduced, &priors)?;
    if differentiate {
        total_loss(&ce, &pal_value, term.lambda)
    } else {
        let (_, breakdown) = total_loss(&ce.detach(), &pal_value, 0.0)?;
        Ok((ce, breakdown))
    }
}
