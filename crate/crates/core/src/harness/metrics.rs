//! Per-run metrics CSV.

use std::path::Path;

use serde::Serialize;

use super::train::RunRecord;
use crate::backbone::write_atomic;
use crate::error::{Error, Result};

/// One metrics line. `step_or_epoch` is `s<N>` for an optimisation step,
/// `e<N>` for an end-of-epoch validation and `final` for the test summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub config_id: String,
    pub seed: u64,
    pub step_or_epoch: String,
    pub ce: Option<f64>,
    pub pal: Option<f64>,
    pub total: Option<f64>,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub attr_prior_corr: Option<f64>,
    pub wall_s: Option<f64>,
}

pub fn metrics_rows(record: &RunRecord) -> Vec<MetricsRow> {
    let blank = |tag: String| MetricsRow {
        config_id: record.config_id.clone(),
        seed: record.seed,
        step_or_epoch: tag,
        ce: None,
        pal: None,
        total: None,
        val_acc: None,
        test_acc: None,
        attr_prior_corr: None,
        wall_s: None,
    };
    let mut rows = Vec::with_capacity(record.steps.len() + record.epochs.len() + 1);
    for s in &record.steps {
        rows.push(MetricsRow {
            ce: Some(s.loss.ce),
            pal: Some(s.loss.pal),
            total: Some(s.loss.total),
            ..blank(format!("s{}", s.step))
        });
    }
    for e in &record.epochs {
        rows.push(MetricsRow {
            ce: Some(e.mean_ce),
            val_acc: e.val_acc,
            ..blank(format!("e{}", e.epoch))
        });
    }
    rows.push(MetricsRow {
        test_acc: record.test_acc,
        attr_prior_corr: record.attr_prior_corr,
        wall_s: Some(record.wall_s),
        ..blank("final".into())
    });
    rows
}

/// Serializes rows with a header line.
pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::invalid(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))
}

/// Writes the whole file at once through a temporary and a rename.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_atomic(path, &csv_bytes(rows)?)
}
