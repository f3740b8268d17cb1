//! Grad and Grad*Input maps at every tap of a freshly initialised model,
//! with their correlation to the landmark prior under each channel strategy.
//!
//! ```bash
//! cargo run --example attribution_maps
//! ```

use pal::attribution::{attribute, reduce_channels, AttributionMethod, ChannelStrategy};
use pal::autodiff::Tape;
use pal::backbone::{forward, ModelSpec, Parameters};
use pal::data::{Dataset, SynthConfig};
use pal::harness::{batch_priors, Batch};
use pal::pal_loss::attribution_prior_correlation;

fn main() -> pal::Result<()> {
    let spec = ModelSpec::toy();
    let params = Parameters::init(&spec, 1)?;
    let data = Dataset::synthetic(0, 8, "test", &SynthConfig::default())?;
    let batch = Batch::from_samples(&data.samples)?;

    let tape = Tape::new();
    let trace = forward(&spec, &params.constants(), &tape.leaf(batch.images.clone()))?;

    println!("{:<11} {:<10} {:>9} {:>8} {:>8} {:>8}", "tap", "method", "zeros", "all", "mean", "half");
    for tap in spec.taps()? {
        if tap.channels < 2 {
            continue;
        }
        let priors = batch_priors(&spec, &tap.name, &batch.landmarks, 3.0)?;
        for method in [AttributionMethod::Grad, AttributionMethod::GradInput] {
            let a = attribute(&trace, &tap.name, method, false)?;
            let zeros = a.values.data().iter().filter(|v| **v == 0.0).count() as f64 / a.values.numel() as f64;
            let mut corr = Vec::new();
            for s in [ChannelStrategy::AllChannels, ChannelStrategy::Mean, ChannelStrategy::mean_of_half()] {
                let r = reduce_channels(&a.values, s)?;
                let c = attribution_prior_correlation(r.value(), &priors)?;
                corr.push(c.iter().sum::<f64>() / c.len() as f64);
            }
            println!(
                "{:<11} {:<10} {:>8.1}% {:>8.3} {:>8.3} {:>8.3}",
                tap.name,
                method.as_str(),
                100.0 * zeros,
                corr[0],
                corr[1],
                corr[2]
            );
        }
    }
    Ok(())
}
