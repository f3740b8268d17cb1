//! End-to-end check of the analytic parameter gradient of the full
//! objective against central finite differences.

use std::time::Instant;

use rand::Rng as _;
use serde::Serialize;

use super::config::Method;
use super::objective::{objective, Batch, PalTerm};
use super::train::step_gradients;
use crate::attribution::{AttributionMethod, ChannelStrategy};
use crate::autodiff::{finite_diff, relative_error, Array, Tape};
use crate::backbone::{ModelSpec, Parameters};
use crate::error::{Error, Result};
use crate::prior::{LandmarkSet, Point, DEFAULT_SIGMA};
use crate::rng;

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_THRESHOLD: f64 = 1e-4;
/// Gradient components at or below this magnitude are not compared.
pub const GRAD_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradcheckCase {
    pub method: Method,
    pub strategy: ChannelStrategy,
}

impl GradcheckCase {
    pub fn label(&self) -> String {
        format!("{}+{}", self.method, self.strategy)
    }
}

/// Every method (including cross-entropy only) under every strategy.
pub fn all_cases() -> Vec<GradcheckCase> {
    let methods = [
        Method::None,
        Method::Attr(AttributionMethod::Grad),
        Method::Attr(AttributionMethod::GradInput),
    ];
    let strategies = [
        ChannelStrategy::AllChannels,
        ChannelStrategy::Mean,
        ChannelStrategy::mean_of_half(),
    ];
    methods
        .iter()
        .flat_map(|&method| strategies.iter().map(move |&strategy| GradcheckCase { method, strategy }))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupReport {
    pub name: String,
    pub max_rel_error: f64,
    /// Components above [`GRAD_FLOOR`].
    pub compared: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaseReport {
    pub case: String,
    pub groups: Vec<GroupReport>,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub eps: f64,
    pub threshold: f64,
    pub cases: Vec<CaseReport>,
    pub wall_s: f64,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.threshold
    }
}

/// Random images, labels and on-canvas landmarks for `spec`'s input size.
pub fn random_batch(spec: &ModelSpec, n: usize, landmarks: usize, seed: u64) -> Result<Batch> {
    let (c, h, w) = spec.input;
    if c != 1 {
        return Err(Error::invalid("gradient check expects single-channel input"));
    }
    let mut r = rng::stream(seed, &["gradcheck".into()]);
    let images: Vec<f64> = (0..n * h * w).map(|_| r.gen_range(0.0..1.0)).collect();
    let labels = (0..n).map(|_| r.gen_range(0..spec.n_classes)).collect();
    let landmarks = (0..n)
        .map(|_| {
            LandmarkSet::new(
                (0..landmarks)
                    .map(|_| Point {
                        x: r.gen_range(0.0..(w - 1) as f64),
                        y: r.gen_range(0.0..(h - 1) as f64),
                    })
                    .collect(),
            )
        })
        .collect();
    Ok(Batch {
        images: Array::new(vec![n, 1, h, w], images)?,
        labels,
        landmarks,
    })
}

/// Checks one case on a fixed batch and parameter set.
pub fn check_case(
    spec: &ModelSpec,
    params: &Parameters,
    batch: &Batch,
    case: GradcheckCase,
    eps: f64,
) -> Result<CaseReport> {
    let term = case.method.attribution().map(|method| PalTerm {
        tap: spec.last_conv_tap(),
        method,
        strategy: case.strategy,
        lambda: 1.0,
        sigma: DEFAULT_SIGMA,
    });
    let (analytic, _) = step_gradients(spec, params, batch, term.as_ref())?;
    let mut groups = Vec::new();
    for (name, g) in &analytic {
        let mut scratch = params.clone();
        let numeric = finite_diff(
            |w| {
                scratch.set(name, w.clone())?;
                let tape = Tape::new();
                let (loss, _) = objective(spec, &scratch.on_tape(&tape), batch, term.as_ref())?;
                loss.item()
            },
            params.get(name).expect("gradient names come from params"),
            eps,
        )?;
        let mut max_rel = 0.0f64;
        let mut compared = 0;
        for (&a, &n) in g.data().iter().zip(numeric.data()) {
            if a.abs() > GRAD_FLOOR {
                compared += 1;
                max_rel = max_rel.max(relative_error(a, n));
            }
        }
        groups.push(GroupReport {
            name: name.clone(),
            max_rel_error: max_rel,
            compared,
            total: g.numel(),
        });
    }
    let max_rel_error = groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max);
    Ok(CaseReport {
        case: case.label(),
        groups,
        max_rel_error,
    })
}

/// Runs `cases` on a freshly initialised `spec` with a random batch of `n`.
pub fn gradcheck(spec: &ModelSpec, cases: &[GradcheckCase], n: usize, seed: u64, eps: f64) -> Result<GradcheckReport> {
    let start = Instant::now();
    spec.validate()?;
    let params = Parameters::init(spec, rng::derive_seed(seed, &["init".into()]))?;
    let batch = random_batch(spec, n, 5, seed)?;
    let cases = cases
        .iter()
        .map(|&c| check_case(spec, &params, &batch, c, eps))
        .collect::<Result<Vec<_>>>()?;
    Ok(GradcheckReport {
        eps,
        threshold: DEFAULT_THRESHOLD,
        cases,
        wall_s: start.elapsed().as_secs_f64(),
    })
}
