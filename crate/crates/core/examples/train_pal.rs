//! Trains the cross-entropy baseline and the prior-constrained model on an
//! in-memory synthetic set and compares accuracy and attribution-prior
//! correlation on held-out data.
//!
//! ```bash
//! cargo run --release --example train_pal -- 2
//! ```
//! The optional argument is the number of epochs.

use pal::data::{Dataset, SynthConfig};
use pal::harness::{train_with, Method, TrainConfig};

fn main() -> pal::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2);
    let syn = SynthConfig::default();
    let train_set = Dataset::synthetic(0, 700, "train", &syn)?;
    let test_set = Dataset::synthetic(0, 210, "test", &syn)?;

    for (name, method) in [("baseline", Method::None), ("prior", TrainConfig::default().method)] {
        let cfg = TrainConfig {
            config_id: name.into(),
            method,
            epochs,
            ..TrainConfig::default()
        };
        let out = train_with(&cfg, &train_set, Some(&test_set), |s| {
            if s.step % 25 == 0 {
                println!("{name:>8} step {:>4} ce {:.3} pal {:+.1}", s.step, s.loss.ce, s.loss.pal);
            }
        })?;
        let r = out.test_report.expect("test set given");
        println!(
            "{name:>8}: test acc {:.3}, corr {:.3} (free half {:.3}), best epoch {}, {:.0}s",
            r.accuracy,
            r.correlation.unwrap_or(f64::NAN),
            r.free_correlation.unwrap_or(f64::NAN),
            out.record.best_epoch,
            out.record.wall_s
        );
    }
    Ok(())
}
