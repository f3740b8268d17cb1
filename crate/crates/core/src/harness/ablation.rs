use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Method, TrainConfig};
use super::train::{train, RunRecord};
use crate::attribution::{AttributionMethod, ChannelStrategy};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Configs crossed with seeds. Each config's own `seed` is replaced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub seeds: Vec<u64>,
    pub configs: Vec<TrainConfig>,
}

/// Baseline plus every (method, strategy) cell.
pub fn full_grid(base: &TrainConfig) -> Vec<TrainConfig> {
    let mut out = vec![TrainConfig {
        config_id: "baseline".into(),
        method: Method::None,
        ..base.clone()
    }];
    for method in [AttributionMethod::Grad, AttributionMethod::GradInput] {
        for strategy in [
            ChannelStrategy::AllChannels,
            ChannelStrategy::Mean,
            ChannelStrategy::mean_of_half(),
        ] {
            out.push(TrainConfig {
                config_id: format!("{method}+{}", strategy.slug()),
                method: Method::Attr(method),
                strategy,
                ..base.clone()
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub config_id: String,
    /// The run's seed, or `agg` for an aggregate row.
    pub seed: String,
    pub tap: String,
    pub method: String,
    pub strategy: String,
    pub lambda: f64,
    pub test_acc: Option<f64>,
    pub attr_prior_corr: Option<f64>,
    /// Half-width of the 95% interval (aggregate rows only).
    pub test_acc_ci95: Option<f64>,
    pub attr_prior_corr_ci95: Option<f64>,
    /// `ok`, or the error that stopped the run.
    pub status: String,
    pub wall_s: f64,
}

pub struct AblationResult {
    pub runs: Vec<AblationRow>,
    pub aggregates: Vec<AblationRow>,
    /// Records of the runs that finished, in grid order.
    pub records: Vec<RunRecord>,
}

impl AblationResult {
    /// Run rows followed by aggregate rows.
    pub fn rows(&self) -> Vec<AblationRow> {
        self.runs.iter().chain(&self.aggregates).cloned().collect()
    }

    pub fn aggregate(&self, config_id: &str) -> Option<&AblationRow> {
        self.aggregates.iter().find(|r| r.config_id == config_id)
    }
}

/// Mean and `1.96·sd/√n` half-width, sd with the `n-1` denominator.
pub fn mean_ci95(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some((mean, f64::NAN));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((mean, 1.96 * var.sqrt() / (n as f64).sqrt()))
}

fn row_for(cfg: &TrainConfig, seed: String) -> AblationRow {
    AblationRow {
        config_id: cfg.config_id.clone(),
        seed,
        tap: cfg.tap_layer().unwrap_or_else(|_| cfg.tap.clone()),
        method: cfg.method.to_string(),
        strategy: if cfg.method == Method::None {
            String::new()
        } else {
            cfg.strategy.to_string()
        },
        lambda: if cfg.method == Method::None { 0.0 } else { cfg.lambda },
        test_acc: None,
        attr_prior_corr: None,
        test_acc_ci95: None,
        attr_prior_corr_ci95: None,
        status: "ok".into(),
        wall_s: 0.0,
    }
}

/// One aggregate row per config over its successful runs.
pub fn aggregate_rows(configs: &[TrainConfig], runs: &[AblationRow]) -> Vec<AblationRow> {
    configs
        .iter()
        .map(|cfg| {
            let ok: Vec<&AblationRow> = runs
                .iter()
                .filter(|r| r.config_id == cfg.config_id && r.status == "ok")
                .collect();
            let acc: Vec<f64> = ok.iter().filter_map(|r| r.test_acc).collect();
            let corr: Vec<f64> = ok.iter().filter_map(|r| r.attr_prior_corr).collect();
            let (a, c) = (mean_ci95(&acc), mean_ci95(&corr));
            let failed = runs.iter().filter(|r| r.config_id == cfg.config_id).count() - ok.len();
            AblationRow {
                test_acc: a.map(|x| x.0),
                test_acc_ci95: a.map(|x| x.1),
                attr_prior_corr: c.map(|x| x.0),
                attr_prior_corr_ci95: c.map(|x| x.1),
                status: if failed == 0 {
                    "ok".into()
                } else {
                    format!("{failed} failed")
                },
                wall_s: ok.iter().map(|r| r.wall_s).sum(),
                ..row_for(cfg, "agg".into())
            }
        })
        .collect()
}

/// Trains every (config, seed) pair, `jobs` at a time. A failing run is
/// recorded in its row and the grid continues.
pub fn run_ablation(
    grid: &AblationGrid,
    train_set: &Dataset,
    test_set: &Dataset,
    jobs: usize,
    mut on_done: impl FnMut(&AblationRow) + Send,
) -> Result<AblationResult> {
    if grid.seeds.len() < 2 {
        return Err(Error::invalid("an ablation needs at least two seeds for interval reporting"));
    }
    let mut ids = std::collections::HashSet::new();
    for c in &grid.configs {
        if !ids.insert(&c.config_id) {
            return Err(Error::invalid(format!("duplicate config_id {:?}", c.config_id)));
        }
    }
    let work: Vec<TrainConfig> = grid
        .configs
        .iter()
        .flat_map(|c| {
            grid.seeds.iter().map(move |&seed| TrainConfig {
                seed,
                ..c.clone()
            })
        })
        .collect();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<(AblationRow, Option<RunRecord>)>>> = Mutex::new(vec![None; work.len()]);
    let on_done = Mutex::new(&mut on_done);
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, work.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cfg) = work.get(i) else { break };
                let start = Instant::now();
                let mut row = row_for(cfg, cfg.seed.to_string());
                let record = match train(cfg, train_set, Some(test_set)) {
                    Ok(out) => {
                        row.test_acc = out.record.test_acc;
                        row.attr_prior_corr = out.record.attr_prior_corr;
                        Some(out.record)
                    }
                    Err(e) => {
                        row.status = format!("error: {e}");
                        None
                    }
                };
                row.wall_s = start.elapsed().as_secs_f64();
                (on_done.lock().expect("callback lock"))(&row);
                slots.lock().expect("slot lock")[i] = Some((row, record));
            });
        }
    });
    let mut runs = Vec::with_capacity(work.len());
    let mut records = Vec::new();
    for slot in slots.into_inner().expect("slot lock") {
        let (row, record) = slot.expect("every grid point ran");
        runs.push(row);
        records.extend(record);
    }
    let aggregates = aggregate_rows(&grid.configs, &runs);
    Ok(AblationResult {
        runs,
        aggregates,
        records,
    })
}
