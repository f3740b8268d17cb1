//! A reduced ablation grid: baseline and three prior configurations over
//! two seeds, written to `out/ablation.csv` with aggregate rows.
//!
//! ```bash
//! cargo run --release --example ablation
//! ```

use std::path::Path;

use pal::attribution::{AttributionMethod, ChannelStrategy};
use pal::data::{Dataset, SynthConfig};
use pal::harness::{run_ablation, write_csv, AblationGrid, Method, TrainConfig};

fn main() -> pal::Result<()> {
    let syn = SynthConfig::default();
    let train_set = Dataset::synthetic(0, 350, "train", &syn)?;
    let test_set = Dataset::synthetic(0, 140, "test", &syn)?;
    let base = TrainConfig {
        epochs: 2,
        ..TrainConfig::default()
    };
    let cell = |method, strategy: ChannelStrategy| TrainConfig {
        config_id: format!("{method}+{}", strategy.slug()),
        method: Method::Attr(method),
        strategy,
        ..base.clone()
    };
    let grid = AblationGrid {
        seeds: vec![0, 1],
        configs: vec![
            TrainConfig {
                config_id: "baseline".into(),
                method: Method::None,
                ..base.clone()
            },
            cell(AttributionMethod::Grad, ChannelStrategy::Mean),
            cell(AttributionMethod::GradInput, ChannelStrategy::AllChannels),
            cell(AttributionMethod::GradInput, ChannelStrategy::mean_of_half()),
        ],
    };
    let result = run_ablation(&grid, &train_set, &test_set, 1, |r| {
        println!("{:<20} seed {} acc {:?} corr {:?}", r.config_id, r.seed, r.test_acc, r.attr_prior_corr);
    })?;
    for a in &result.aggregates {
        println!(
            "{:<20} acc {:.3} ± {:.3}  corr {:.3} ± {:.3}",
            a.config_id,
            a.test_acc.unwrap_or(f64::NAN),
            a.test_acc_ci95.unwrap_or(f64::NAN),
            a.attr_prior_corr.unwrap_or(f64::NAN),
            a.attr_prior_corr_ci95.unwrap_or(f64::NAN)
        );
    }
    let path = Path::new("out/ablation.csv");
    write_csv(path, &result.rows())?;
    println!("wrote {}", path.display());
    Ok(())
}
