use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::eval::{accuracy, evaluate, CorrelationProbe, EvalReport};
use super::objective::{objective, Batch, PalTerm};
use crate::attribution::{AttributionMethod, ChannelStrategy};
use crate::autodiff::{backward, Tape};
use crate::backbone::{adam_step, poly_decay, AdamConfig, AdamState, ModelSpec, Parameters};
use crate::data::{augment, Dataset, Sample};
use crate::error::{Error, Result};
use crate::pal_loss::LossBreakdown;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_ce: f64,
    pub val_acc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_id: String,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept (best validation accuracy).
    pub best_epoch: usize,
    pub test_acc: Option<f64>,
    pub attr_prior_corr: Option<f64>,
    pub wall_s: f64,
}

pub struct TrainOutcome {
    pub spec: ModelSpec,
    pub record: RunRecord,
    /// Weights with the best validation accuracy.
    pub best: Parameters,
    pub last: Parameters,
    pub test_report: Option<EvalReport>,
}

/// The probe used to report attribution–prior correlation for a config.
/// Cross-entropy runs are measured the way the default prior-trained model
/// is: Grad*Input, mean of the first half of the channels.
pub fn probe_for(cfg: &TrainConfig) -> Result<CorrelationProbe> {
    let (method, strategy) = match cfg.method.attribution() {
        Some(m) => (m, cfg.strategy),
        None => (AttributionMethod::GradInput, ChannelStrategy::mean_of_half()),
    };
    Ok(CorrelationProbe {
        tap: cfg.tap_layer()?,
        method,
        strategy,
        sigma: cfg.sigma,
    })
}

fn pal_term(cfg: &TrainConfig) -> Result<Option<PalTerm>> {
    Ok(match cfg.method.attribution() {
        None => None,
        Some(method) => Some(PalTerm {
            tap: cfg.tap_layer()?,
            method,
            strategy: cfg.strategy,
            lambda: cfg.lambda,
            sigma: cfg.sigma,
        }),
    })
}

/// Order in which training samples are visited during `epoch`.
fn epoch_order(cfg: &TrainConfig, train: &Dataset, epoch: usize) -> Vec<usize> {
    let mut r = rng::stream(cfg.seed, &["batch".into(), epoch.into()]);
    if !cfg.balanced_sampler {
        let mut idx: Vec<usize> = (0..train.len()).collect();
        idx.shuffle(&mut r);
        return idx;
    }
    // Round-robin over independently shuffled per-class queues, cycling the
    // smaller classes, so every batch is (nearly) class-balanced.
    let mut queues: Vec<Vec<usize>> = vec![Vec::new(); train.n_classes];
    for (i, s) in train.samples.iter().enumerate() {
        queues[s.label].push(i);
    }
    queues.retain(|q| !q.is_empty());
    for q in &mut queues {
        q.shuffle(&mut r);
    }
    (0..train.len()).map(|i| {
        let q = &queues[i % queues.len()];
        q[(i / queues.len()) % q.len()]
    }).collect()
}

/// One optimisation step's gradients, for every parameter.
pub fn step_gradients(
    spec: &ModelSpec,
    params: &Parameters,
    batch: &Batch,
    pal: Option<&PalTerm>,
) -> Result<(BTreeMap<String, crate::autodiff::Array>, LossBreakdown)> {
    let tape = Tape::new();
    let tracked = params.on_tape(&tape);
    let (total, breakdown) = objective(spec, &tracked, batch, pal)?;
    let names: Vec<&String> = tracked.keys().collect();
    let wrt: Vec<_> = tracked.values().collect();
    let grads = backward(&total, &wrt, false)?;
    Ok((
        names.into_iter().cloned().zip(grads.into_iter().map(|g| g.value().clone())).collect(),
        breakdown,
    ))
}

/// Trains under `cfg`, calling `on_step` after every update.
pub fn train_with(
    cfg: &TrainConfig,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<TrainOutcome> {
    let start = Instant::now();
    cfg.validate()?;
    let spec = cfg.spec()?;
    if train_set.n_classes != spec.n_classes {
        return Err(Error::invalid(format!(
            "class-count mismatch: model has {} outputs, training set declares {} classes",
            spec.n_classes, train_set.n_classes
        )));
    }
    let (train, val) = train_set.stratified_split(cfg.val_fraction);
    if train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let pal = pal_term(cfg)?;
    let batches_per_epoch = train.len().div_ceil(cfg.batch_size);
    let horizon = if cfg.total_steps == 0 {
        cfg.epochs * batches_per_epoch
    } else {
        cfg.total_steps
    };

    let mut params = Parameters::init(&spec, rng::derive_seed(cfg.seed, &["init".into()]))?;
    let mut adam = AdamState::new();
    let mut best = params.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut steps = Vec::new();
    let mut epochs = Vec::new();
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        let order = epoch_order(cfg, &train, epoch);
        let mut ce_sum = 0.0;
        let mut ce_count = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let samples: Vec<Sample> = chunk
                .iter()
                .map(|&i| {
                    let s = &train.samples[i];
                    if cfg.augment {
                        augment(s, &mut rng::stream(cfg.seed, &["augment".into(), epoch.into(), i.into()]))
                    } else {
                        Ok(s.clone())
                    }
                })
                .collect::<Result<_>>()?;
            let batch = Batch::from_samples(&samples)?;
            let (grads, loss) = step_gradients(&spec, &params, &batch, pal.as_ref())
                .map_err(|e| Error::NonFinite(format!("step {step} (epoch {epoch}): {e}")))?;
            if !loss.total.is_finite() {
                return Err(Error::NonFinite(format!(
                    "step {step} (epoch {epoch}): ce={} pal={} total={}",
                    loss.ce, loss.pal, loss.total
                )));
            }
            let lr = poly_decay(cfg.lr, step, horizon, cfg.lr_power);
            adam_step(&mut params, &grads, &mut adam, lr, AdamConfig::default()).map_err(|e| {
                Error::NonFinite(format!(
                    "step {step} (epoch {epoch}, ce={} pal={} total={}): {e}",
                    loss.ce, loss.pal, loss.total
                ))
            })?;
            ce_sum += loss.ce;
            ce_count += 1;
            let rec = StepRecord { step, epoch, lr, loss };
            on_step(&rec);
            steps.push(rec);
            step += 1;
        }
        let val_acc = if val.is_empty() {
            None
        } else {
            Some(accuracy(&spec, &params, &val.samples, cfg.eval_batch_size)?)
        };
        // Without a validation split the last epoch always wins.
        let score = val_acc.unwrap_or(epoch as f64);
        if score > best_acc {
            best_acc = score;
            best_epoch = epoch;
            best = params.clone();
        }
        epochs.push(EpochRecord {
            epoch,
            mean_ce: ce_sum / ce_count as f64,
            val_acc,
        });
    }

    let test_report = match test_set {
        Some(t) => Some(evaluate(&spec, &best, t, Some(&probe_for(cfg)?), cfg.eval_batch_size)?),
        None => None,
    };
    let record = RunRecord {
        config_id: cfg.config_id.clone(),
        seed: cfg.seed,
        steps,
        epochs,
        best_epoch,
        test_acc: test_report.as_ref().map(|r| r.accuracy),
        attr_prior_corr: test_report.as_ref().and_then(|r| r.correlation),
        wall_s: start.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        spec,
        record,
        best,
        last: params,
        test_report,
    })
}

pub fn train(cfg: &TrainConfig, train_set: &Dataset, test_set: Option<&Dataset>) -> Result<TrainOutcome> {
    train_with(cfg, train_set, test_set, |_| {})
}
