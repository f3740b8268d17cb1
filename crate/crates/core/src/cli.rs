//! Command-line front end for the `pal` binary.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::attribution::{AttributionMethod, ChannelStrategy};
use crate::backbone::{load_checkpoint, save_checkpoint, write_atomic, ModelSpec};
use crate::data::{generate_dataset, load_dataset, load_manifest, load_sample, SynthConfig};
use crate::error::{Error, Result};
use crate::harness::{
    all_cases, evaluate, export_attributions, full_grid, gradcheck, metrics_rows, run_ablation, train_with,
    write_csv, AblationGrid, CorrelationProbe, Method, TrainConfig,
};
use crate::prior::DEFAULT_SIGMA;

#[derive(Parser, Debug)]
#[command(name = "pal", version, about = "Train and inspect attribution-constrained classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic train/test dataset.
    GenData(GenDataArgs),
    /// Train one configuration and keep the best-validation checkpoint.
    Train(TrainArgs),
    /// Accuracy, confusion matrix and attribution-prior correlation.
    Eval(EvalArgs),
    /// Export attribution and prior maps as PGM images.
    Attribute(AttributeArgs),
    /// Compare analytic and finite-difference gradients on the tiny model.
    Gradcheck(GradcheckArgs),
    /// Train a grid of configurations over several seeds.
    Ablation(AblationArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long, default_value = "data")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub n_train: usize,
    #[arg(long, default_value_t = 500)]
    pub n_test: usize,
    #[arg(long, default_value_t = 7)]
    pub classes: usize,
}

/// Config file plus per-field overrides.
#[derive(Args, Debug, Default, Clone)]
pub struct ConfigArgs {
    /// JSON training config; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub tap: Option<String>,
    /// none, grad or grad_input
    #[arg(long)]
    pub method: Option<Method>,
    /// all, mean, mean_of_half or mean_of_half:<C1>
    #[arg(long)]
    pub strategy: Option<ChannelStrategy>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Training manifest.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Test manifest.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub config_id: Option<String>,
    #[arg(long)]
    pub no_augment: bool,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::load(p)?,
            None => TrainConfig::default(),
        };
        self.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(v) = &self.tap {
            cfg.tap = v.clone();
        }
        if let Some(v) = self.method {
            cfg.method = v;
        }
        if let Some(v) = self.strategy {
            cfg.strategy = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = &self.train {
            cfg.train = v.clone();
        }
        if let Some(v) = &self.test {
            cfg.test = Some(v.clone());
        }
        if let Some(v) = &self.config_id {
            cfg.config_id = v.clone();
        }
        if self.no_augment {
            cfg.augment = false;
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Directory for the checkpoint, metrics CSV and run record.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Log every N steps (0 disables).
    #[arg(long, default_value_t = 20)]
    pub log_every: usize,
}

#[derive(Args, Debug, Clone)]
pub struct ProbeArgs {
    /// Tapped layer (defaults to the last convolutional map).
    #[arg(long)]
    pub layer: Option<String>,
    #[arg(long, default_value = "grad_input")]
    pub method: AttributionMethod,
    #[arg(long, default_value = "mean_of_half")]
    pub strategy: ChannelStrategy,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: f64,
}

impl ProbeArgs {
    fn probe(&self, spec: &ModelSpec) -> Result<CorrelationProbe> {
        let tap = self.layer.clone().unwrap_or_else(|| spec.last_conv_tap());
        spec.tap(&tap)?;
        Ok(CorrelationProbe {
            tap,
            method: self.method,
            strategy: self.strategy,
            sigma: self.sigma,
        })
    }
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset manifest.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub probe: ProbeArgs,
    #[arg(long, default_value_t = 50)]
    pub batch_size: usize,
}

#[derive(Args, Debug)]
pub struct AttributeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated entry indices.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub samples: Vec<usize>,
    #[command(flatten)]
    pub probe: ProbeArgs,
    #[arg(long, default_value = "maps")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Batch size of the random probe batch.
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = crate::harness::gradcheck::DEFAULT_EPS)]
    pub eps: f64,
    /// Also print every parameter group.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Args, Debug)]
pub struct AblationArgs {
    /// JSON grid `{seeds, configs}`; without it every method/strategy cell
    /// plus the baseline is run.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub seeds: Vec<u64>,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value = "ablation.csv")]
    pub out: PathBuf,
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, (serde_json::to_string_pretty(value)? + "\n").as_bytes())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn gen_data(a: &GenDataArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_classes: a.classes,
        ..SynthConfig::default()
    };
    for (split, n) in [("train", a.n_train), ("test", a.n_test)] {
        let m = generate_dataset(&a.out, a.seed, n, split, &cfg)?;
        println!(
            "{split}: {} samples, class counts {:?} -> {}",
            m.entries.len(),
            m.class_counts(),
            a.out.join(format!("{split}.json")).display()
        );
    }
    Ok(())
}

pub fn run_train(a: &TrainArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let train_set = load_dataset(&cfg.train)?;
    let test_set = cfg.test.as_deref().map(load_dataset).transpose()?;
    create_dir(&a.out)?;
    let log_every = a.log_every;
    let out = train_with(&cfg, &train_set, test_set.as_ref(), |s| {
        if log_every > 0 && s.step % log_every == 0 {
            println!(
                "step {:>5} epoch {:>3} lr {:.2e} ce {:.4} pal {:.4} total {:.4}",
                s.step, s.epoch, s.lr, s.loss.ce, s.loss.pal, s.loss.total
            );
        }
    })?;
    for e in &out.record.epochs {
        println!("epoch {:>3} mean ce {:.4} val acc {:?}", e.epoch, e.mean_ce, e.val_acc);
    }
    let stem = format!("{}_s{}", cfg.config_id, cfg.seed);
    let ckpt = a.out.join(format!("{stem}.ckpt"));
    save_checkpoint(&ckpt, &out.spec, &out.best)?;
    write_csv(&a.out.join(format!("{stem}_metrics.csv")), &metrics_rows(&out.record))?;
    write_json(&a.out.join(format!("{stem}_run.json")), &out.record)?;
    if let Some(r) = &out.test_report {
        println!("test acc {:.4} attr-prior corr {:?}", r.accuracy, r.correlation);
    }
    println!("best epoch {} -> {}", out.record.best_epoch, ckpt.display());
    Ok(())
}

pub fn run_eval(a: &EvalArgs) -> Result<()> {
    let (spec, params) = load_checkpoint(&a.checkpoint)?;
    let ds = load_dataset(&a.data)?;
    let report = evaluate(&spec, &params, &ds, Some(&a.probe.probe(&spec)?), a.batch_size)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

pub fn run_attribute(a: &AttributeArgs) -> Result<()> {
    let (spec, params) = load_checkpoint(&a.checkpoint)?;
    let m = load_manifest(&a.data)?;
    let samples = a
        .samples
        .iter()
        .map(|&i| {
            let e = m
                .entries
                .get(i)
                .ok_or_else(|| Error::invalid(format!("sample {i} out of range ({} entries)", m.entries.len())))?;
            Ok((format!("{i:06}"), load_sample(&m, e)?))
        })
        .collect::<Result<Vec<_>>>()?;
    for p in export_attributions(&spec, &params, &samples, &a.probe.probe(&spec)?, &a.out)? {
        println!("{}", p.display());
    }
    Ok(())
}

/// Returns whether every case passed.
pub fn run_gradcheck(a: &GradcheckArgs) -> Result<bool> {
    let report = gradcheck(&ModelSpec::tiny(), &all_cases(), a.n, a.seed, a.eps)?;
    for case in &report.cases {
        println!("{:<28} max rel err {:.3e}", case.case, case.max_rel_error);
        if a.verbose {
            for g in &case.groups {
                println!("    {:<16} {:.3e} ({}/{} compared)", g.name, g.max_rel_error, g.compared, g.total);
            }
        }
    }
    let ok = report.passed();
    println!(
        "{} max rel err {:.3e} (threshold {:.0e}) in {:.1}s",
        if ok { "PASS" } else { "FAIL" },
        report.max_rel_error(),
        report.threshold,
        report.wall_s
    );
    Ok(ok)
}

pub fn run_ablation_cmd(a: &AblationArgs) -> Result<()> {
    // These differ per cell or per run, so a single override would collapse the grid.
    let c = &a.config;
    for (set, flag) in [
        (c.method.is_some(), "--method"),
        (c.strategy.is_some(), "--strategy"),
        (c.config_id.is_some(), "--config-id"),
        (c.seed.is_some(), "--seed"),
    ] {
        if set {
            return Err(Error::invalid(format!(
                "{flag} varies across the ablation grid; use --grid (or --seeds) instead"
            )));
        }
    }
    let mut grid = match &a.grid {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<AblationGrid>(&text).map_err(|e| Error::format(p, format!("bad grid: {e}")))?
        }
        None => AblationGrid {
            seeds: a.seeds.clone(),
            configs: full_grid(&a.config.resolve()?),
        },
    };
    for c in &mut grid.configs {
        a.config.apply(c);
        c.validate()?;
    }
    let first = grid.configs.first().ok_or_else(|| Error::invalid("empty grid"))?;
    let train_set = load_dataset(&first.train)?;
    let test_path = first.test.clone().ok_or_else(|| Error::invalid("ablation needs a test manifest"))?;
    let test_set = load_dataset(&test_path)?;
    let result = run_ablation(&grid, &train_set, &test_set, a.jobs, |r| {
        println!(
            "{:<20} seed {:<4} acc {:?} corr {:?} [{}] {:.0}s",
            r.config_id, r.seed, r.test_acc, r.attr_prior_corr, r.status, r.wall_s
        );
    })?;
    write_csv(&a.out, &result.rows())?;
    for r in &result.aggregates {
        println!(
            "{:<20} acc {:.4} ± {:.4} corr {:.4} ± {:.4}",
            r.config_id,
            r.test_acc.unwrap_or(f64::NAN),
            r.test_acc_ci95.unwrap_or(f64::NAN),
            r.attr_prior_corr.unwrap_or(f64::NAN),
            r.attr_prior_corr_ci95.unwrap_or(f64::NAN)
        );
    }
    println!("-> {}", a.out.display());
    Ok(())
}

/// Parses `std::env::args` and runs; returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenData(a) => gen_data(a).map(|_| true),
        Command::Train(a) => run_train(a).map(|_| true),
        Command::Eval(a) => run_eval(a).map(|_| true),
        Command::Attribute(a) => run_attribute(a).map(|_| true),
        Command::Gradcheck(a) => run_gradcheck(a),
        Command::Ablation(a) => run_ablation_cmd(a).map(|_| true),
    };
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
