use serde::Serialize;

use super::objective::{batch_priors, Batch};
use crate::attribution::{attribute, reduce_channels, reduce_free_channels, AttributionMethod, ChannelStrategy};
use crate::autodiff::{Tape, Tensor};
use crate::backbone::{forward, predictions, ModelSpec, Parameters};
use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::pal_loss::attribution_prior_correlation;

/// How attribution maps are measured against the prior during evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationProbe {
    pub tap: String,
    pub method: AttributionMethod,
    pub strategy: ChannelStrategy,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub n: usize,
    pub accuracy: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    /// Mean per-sample Pearson correlation of the reduced attribution with the prior.
    pub correlation: Option<f64>,
    /// Same for the unconstrained channels of a mean-of-half strategy.
    pub free_correlation: Option<f64>,
}

fn check_classes(spec: &ModelSpec, ds: &Dataset) -> Result<()> {
    if spec.n_classes != ds.n_classes {
        return Err(Error::invalid(format!(
            "class-count mismatch: model predicts {} classes, dataset declares {}",
            spec.n_classes, ds.n_classes
        )));
    }
    Ok(())
}

/// Top-1 predictions without building a tape.
pub fn predict(spec: &ModelSpec, params: &Parameters, samples: &[Sample], batch_size: usize) -> Result<Vec<usize>> {
    let consts = params.constants();
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let b = Batch::from_samples(chunk)?;
        let trace = forward(spec, &consts, &Tensor::constant(b.images))?;
        out.extend(predictions(trace.logits.value()));
    }
    Ok(out)
}

pub fn accuracy(spec: &ModelSpec, params: &Parameters, samples: &[Sample], batch_size: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("accuracy of an empty set"));
    }
    let pred = predict(spec, params, samples, batch_size)?;
    let hits = pred.iter().zip(samples).filter(|(p, s)| **p == s.label).count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Per-sample correlations of the constrained and (for mean-of-half) the
/// free channel maps with each sample's prior.
pub fn correlations(
    spec: &ModelSpec,
    params: &Parameters,
    samples: &[Sample],
    probe: &CorrelationProbe,
    batch_size: usize,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let consts = params.constants();
    let has_free = matches!(probe.strategy, ChannelStrategy::MeanOfHalf(_));
    let mut constrained = Vec::with_capacity(samples.len());
    let mut free = Vec::new();
    for chunk in samples.chunks(batch_size.max(1)) {
        let b = Batch::from_samples(chunk)?;
        let tape = Tape::new();
        let trace = forward(spec, &consts, &tape.leaf(b.images.clone()))?;
        let attr = attribute(&trace, &probe.tap, probe.method, false)?;
        let priors = batch_priors(spec, &probe.tap, &b.landmarks, probe.sigma)?;
        let reduced = reduce_channels(&attr.values, probe.strategy)?;
        constrained.extend(attribution_prior_correlation(reduced.value(), &priors)?);
        if has_free {
            let rest = reduce_free_channels(&attr.values, probe.strategy)?;
            free.extend(attribution_prior_correlation(rest.value(), &priors)?);
        }
    }
    Ok((constrained, has_free.then_some(free)))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn evaluate(
    spec: &ModelSpec,
    params: &Parameters,
    ds: &Dataset,
    probe: Option<&CorrelationProbe>,
    batch_size: usize,
) -> Result<EvalReport> {
    check_classes(spec, ds)?;
    if ds.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty dataset"));
    }
    let pred = predict(spec, params, &ds.samples, batch_size)?;
    let mut confusion = vec![vec![0; ds.n_classes]; ds.n_classes];
    let mut hits = 0;
    for (p, s) in pred.iter().zip(&ds.samples) {
        confusion[s.label][*p] += 1;
        hits += usize::from(*p == s.label);
    }
    let (correlation, free_correlation) = match probe {
        Some(probe) => {
            let (c, f) = correlations(spec, params, &ds.samples, probe, batch_size)?;
            (Some(mean(&c)), f.map(|f| mean(&f)))
        }
        None => (None, None),
    };
    Ok(EvalReport {
        n: ds.len(),
        accuracy: hits as f64 / ds.len() as f64,
        confusion,
        correlation,
        free_correlation,
    })
}
