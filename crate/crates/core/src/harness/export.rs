//! Attribution and prior maps written as normalized PGM files.

use std::fs;
use std::path::{Path, PathBuf};

use super::eval::CorrelationProbe;
use super::objective::{batch_priors, Batch};
use crate::attribution::{attribute, reduce_channels, reduce_free_channels, ChannelStrategy};
use crate::autodiff::{Array, Tape};
use crate::backbone::{forward, ModelSpec, Parameters};
use crate::data::pgm;
use crate::data::Sample;
use crate::error::{Error, Result};

fn write_planes(dir: &Path, stem: &str, maps: &Array, sample: usize, out: &mut Vec<PathBuf>) -> Result<()> {
    let [_, c, h, w] = *maps.shape() else {
        return Err(Error::invalid("expected N×C×H×W maps"));
    };
    for ch in 0..c {
        let name = if c == 1 {
            format!("{stem}.pgm")
        } else {
            format!("{stem}_c{ch}.pgm")
        };
        let path = dir.join(name);
        pgm::write_normalized(&path, &maps.data()[(sample * c + ch) * h * w..][..h * w], w, h)?;
        out.push(path);
    }
    Ok(())
}

/// Writes, per sample, the reduced attribution map
/// (`{id}_{layer}_{method}_{strategy}.pgm`, one file per channel when
/// channels are kept), the free-half map for mean-of-half
/// (`..._mean_of_half_free.pgm`) and the prior (`{id}_{layer}_prior_heatmap.pgm`).
/// Returns the written paths.
pub fn export_attributions(
    spec: &ModelSpec,
    params: &Parameters,
    samples: &[(String, Sample)],
    probe: &CorrelationProbe,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    if samples.is_empty() {
        return Ok(written);
    }
    let batch = Batch::from_samples(samples.iter().map(|(_, s)| s))?;
    let tape = Tape::new();
    let trace = forward(spec, &params.constants(), &tape.leaf(batch.images.clone()))?;
    let attr = attribute(&trace, &probe.tap, probe.method, false)?;
    let reduced = reduce_channels(&attr.values, probe.strategy)?;
    let free = match probe.strategy {
        ChannelStrategy::MeanOfHalf(_) => Some(reduce_free_channels(&attr.values, probe.strategy)?),
        _ => None,
    };
    let priors = batch_priors(spec, &probe.tap, &batch.landmarks, probe.sigma)?;
    let layer = probe.tap.replace('.', "_");
    for (i, (id, _)) in samples.iter().enumerate() {
        let stem = format!("{id}_{layer}_{}_{}", probe.method, probe.strategy.slug());
        write_planes(dir, &stem, reduced.value(), i, &mut written)?;
        if let Some(f) = &free {
            write_planes(dir, &format!("{stem}_free"), f.value(), i, &mut written)?;
        }
        let (h, w) = priors[i].resolution();
        let path = dir.join(format!("{id}_{layer}_prior_heatmap.pgm"));
        pgm::write_normalized(&path, priors[i].values.data(), w, h)?;
        written.push(path);
    }
    Ok(written)
}
