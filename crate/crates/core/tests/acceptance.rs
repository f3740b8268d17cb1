//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

mod common;

use std::time::Instant;

use pal::attribution::{attribute, grad_attribution, reduce_channels, sum_logits, tap_gradient, AttributionMethod, ChannelStrategy};
use pal::autodiff::{backward, Array, Tape, Tensor};
use pal::backbone::{checkpoint_bytes, ModelSpec};
use pal::data::{generate_dataset, load_dataset, SynthConfig};
use pal::harness::{all_cases, gradcheck, run_ablation, train, AblationGrid, Method, TrainConfig};
use pal::pal_loss::pal_loss;
use pal::prior::{gaussian_heatmap, standardize_map, transform_landmarks, LandmarkSet, PriorHeatmap};
use rand::Rng;

use common::{random_trace, rng, uniform};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gradient_path() -> Outcome {
    let report = gradcheck(&ModelSpec::tiny(), &all_cases(), 2, 0, 1e-5).expect("gradcheck runs");
    let worst = report.max_rel_error();
    let cases: Vec<String> = report.cases.iter().map(|c| format!("{}={:.1e}", c.case, c.max_rel_error)).collect();
    outcome(
        worst < 1e-4 && report.wall_s < 120.0,
        format!("max rel err {worst:.2e} over 9 cases in {:.1}s [{}]", report.wall_s, cases.join(" ")),
    )
}

fn exact_contribution() -> Outcome {
    let spec = ModelSpec::toy().with_bias(false);
    let taps: Vec<String> = spec.taps().unwrap().into_iter().map(|t| t.name).collect();
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let tape = Tape::new();
        let trace = random_trace(&tape, &spec, 1, 100 + trial);
        let total = sum_logits(&trace).unwrap().value().sum();
        for layer in &taps {
            let g = tap_gradient(&trace, layer, false).unwrap();
            let f = trace.tap(layer).unwrap().value();
            let s: f64 = g.data().iter().zip(f.data()).map(|(a, b)| a * b).sum();
            worst = worst.max((s - total).abs() / total.abs());
        }
    }
    outcome(worst <= 1e-8, format!("20 bias-free nets x {} taps, max rel err {worst:.2e}", taps.len()))
}

fn random_prior(h: usize, w: usize, seed: u64) -> PriorHeatmap {
    standardize_map(&PriorHeatmap {
        values: uniform(&mut rng(seed), &[h, w], 0.0, 1.0),
        standardized: false,
    })
    .unwrap()
}

fn pal_invariants() -> Outcome {
    // (a) every channel an increasing affine image of the prior.
    let mut worst_a = 0.0f64;
    for (seed, &(c, h, w)) in [(1, 6, 8), (3, 5, 5), (16, 4, 12)].iter().enumerate() {
        let p = random_prior(h, w, seed as u64);
        let mut r = rng(seed as u64);
        let data: Vec<f64> = (0..c)
            .flat_map(|_| {
                let (alpha, beta) = (r.gen_range(0.1..10.0), r.gen_range(-5.0..5.0));
                p.values.data().iter().map(move |v| alpha * v + beta).collect::<Vec<_>>()
            })
            .collect();
        let a = Tensor::constant(Array::new(vec![1, c, h, w], data).unwrap());
        let v = pal_loss(&a, &[p]).unwrap().item().unwrap();
        worst_a = worst_a.max((v + (h * w) as f64).abs());
    }
    // (b)
    let mut worst_b = 0.0f64;
    let mut r = rng(77);
    for trial in 0..100 {
        let a = uniform(&mut r, &[2, 3, 6, 5], 0.0, 2.0);
        let (alpha, beta) = (r.gen_range(1e-2..1e2), r.gen_range(-1e2..1e2));
        let priors = [random_prior(6, 5, 1000 + trial), random_prior(6, 5, 2000 + trial)];
        let x = pal_loss(&Tensor::constant(a.clone()), &priors).unwrap().item().unwrap();
        let y = pal_loss(&Tensor::constant(a.map(|v| alpha * v + beta)), &priors).unwrap().item().unwrap();
        worst_b = worst_b.max((x - y).abs());
    }
    // (c) through a real attribution map on a network.
    let spec = ModelSpec::toy();
    let tape = Tape::new();
    let trace = random_trace(&tape, &spec, 2, 5);
    let attr = attribute(&trace, "conv4", AttributionMethod::GradInput, true).unwrap();
    let reduced = reduce_channels(&attr.values, ChannelStrategy::mean_of_half()).unwrap();
    let loss = pal_loss(&reduced, &[random_prior(16, 16, 1), random_prior(16, 16, 2)]).unwrap();
    let g = backward(&loss, &[&attr.values], false).unwrap().remove(0);
    let c = 32;
    let free_nonzero = g.data().iter().enumerate().filter(|(i, v)| (i / 256) % c >= c / 2 && **v != 0.0).count();
    let constrained_nonzero = g.data().iter().enumerate().filter(|(i, v)| (i / 256) % c < c / 2 && **v != 0.0).count();
    outcome(
        worst_a <= 1e-9 && worst_b <= 1e-9 && free_nonzero == 0 && constrained_nonzero > 0,
        format!(
            "(a) |pal+HW| {worst_a:.1e}; (b) max |diff| {worst_b:.1e} over 100 draws; (c) {free_nonzero} nonzero free-half gradients"
        ),
    )
}

fn prior_correctness() -> Outcome {
    let (h, w, sigma) = (48, 40, 3.0);
    let norm = 1.0 / (2.0 * std::f64::consts::PI * sigma * sigma).sqrt();
    let mut r = rng(4);
    let mut closed = 0.0f64;
    let mut moments = 0.0f64;
    let mut flip = 0.0f64;
    for _ in 0..10 {
        let pts: Vec<(f64, f64)> = (0..5).map(|_| (r.gen_range(0..w) as f64, r.gen_range(0..h) as f64)).collect();
        let lms = LandmarkSet::from_xy(&pts);
        let map = gaussian_heatmap(&lms, h, w, sigma).unwrap();
        for i in 0..h {
            for j in 0..w {
                let want: f64 = pts
                    .iter()
                    .map(|&(x, y)| norm * (-((i as f64 - y).powi(2) + (j as f64 - x).powi(2)) / (2.0 * sigma * sigma)).exp())
                    .sum();
                closed = closed.max((map.at(i, j) - want).abs());
            }
        }
        let z = standardize_map(&map).unwrap();
        let n = (h * w) as f64;
        let mean = z.values.sum() / n;
        let var = z.values.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        moments = moments.max(mean.abs()).max((var - 1.0).abs());
        let mirrored = gaussian_heatmap(&transform_landmarks(&lms, 0.0, true, h, w).unwrap(), h, w, sigma).unwrap();
        for i in 0..h {
            for j in 0..w {
                flip = flip.max((map.at(i, w - 1 - j) - mirrored.at(i, j)).abs());
            }
        }
    }
    let single = gaussian_heatmap(&LandmarkSet::from_xy(&[(20.0, 20.0)]), h, w, sigma).unwrap();
    let peak = single.at(20, 20);
    let pass = closed <= 1e-12 && moments <= 1e-9 && flip <= 1e-9 && (peak - 0.132981).abs() <= 1e-6;
    outcome(
        pass,
        format!("closed form {closed:.1e}; peak {peak:.6}; moments {moments:.1e}; flip {flip:.1e}"),
    )
}

fn sparsity() -> Outcome {
    let spec = ModelSpec::toy();
    let info = spec.tap("conv4").unwrap();
    assert!(info.feeds_pool);
    let tape = Tape::new();
    let trace = random_trace(&tape, &spec, 8, 21);
    let a = grad_attribution(&trace, "conv4", false).unwrap();
    let zeros = a.values.data().iter().filter(|&&v| v == 0.0).count();
    let frac = zeros as f64 / a.values.numel() as f64;
    outcome(frac >= 0.5, format!("{:.1}% of Grad entries exactly zero at conv4 (before 2x2 max-pool)", 100.0 * frac))
}

fn determinism() -> Outcome {
    let data = pal::data::Dataset::synthetic(9, 140, "train", &SynthConfig::default()).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let a = train(&cfg, &data, None).unwrap();
    let b = train(&cfg, &data, None).unwrap();
    let same_ckpt = checkpoint_bytes(&a.spec, &a.best).unwrap() == checkpoint_bytes(&b.spec, &b.best).unwrap();
    let none = train(&TrainConfig { method: Method::None, ..cfg.clone() }, &data, None).unwrap();
    let zero = train(&TrainConfig { lambda: 0.0, ..cfg.clone() }, &data, None).unwrap();
    let same_traj = none.last.bit_eq(&zero.last)
        && none
            .record
            .steps
            .iter()
            .zip(&zero.record.steps)
            .all(|(x, y)| x.loss.ce.to_bits() == y.loss.ce.to_bits());
    outcome(
        same_ckpt && same_traj,
        format!("repeat run checkpoint identical: {same_ckpt}; lambda=0 vs none trajectory identical: {same_traj}"),
    )
}

fn training_effect() -> Vec<(String, Outcome)> {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let syn = SynthConfig::default();
    generate_dataset(dir.path(), 0, 2000, "train", &syn).unwrap();
    generate_dataset(dir.path(), 0, 500, "test", &syn).unwrap();
    let train_set = load_dataset(&dir.path().join("train.json")).unwrap();
    let test_set = load_dataset(&dir.path().join("test.json")).unwrap();
    let pal_cfg = TrainConfig {
        config_id: "grad_input+mean_of_half".into(),
        ..TrainConfig::default()
    };
    let grid = AblationGrid {
        seeds: vec![0, 1, 2, 3, 4],
        configs: vec![
            TrainConfig::baseline(),
            pal_cfg.clone(),
            TrainConfig {
                config_id: "grad_input+all".into(),
                strategy: ChannelStrategy::AllChannels,
                ..pal_cfg
            },
        ],
    };
    let result = run_ablation(&grid, &train_set, &test_set, 1, |r| {
        println!(
            "    {:<24} seed {} acc {:.4} corr {:.4} {:.0}s",
            r.config_id,
            r.seed,
            r.test_acc.unwrap_or(f64::NAN),
            r.attr_prior_corr.unwrap_or(f64::NAN),
            r.wall_s
        );
    })
    .unwrap();
    let wall = start.elapsed().as_secs_f64();
    for a in &result.aggregates {
        println!(
            "    {:<24} mean acc {:.4} ± {:.4}  mean corr {:.4} ± {:.4}",
            a.config_id,
            a.test_acc.unwrap_or(f64::NAN),
            a.test_acc_ci95.unwrap_or(f64::NAN),
            a.attr_prior_corr.unwrap_or(f64::NAN),
            a.attr_prior_corr_ci95.unwrap_or(f64::NAN)
        );
    }
    let get = |id: &str| {
        let a = result.aggregate(id).unwrap();
        (a.test_acc.unwrap_or(f64::NAN), a.attr_prior_corr.unwrap_or(f64::NAN))
    };
    let (base_acc, base_corr) = get("baseline");
    let (pal_acc, pal_corr) = get("grad_input+mean_of_half");
    let (all_acc, _) = get("grad_input+all");
    let in_time = wall < 1800.0;
    let timing = format!("grid wall {wall:.0}s");
    vec![
        (
            "5a correlation gain".into(),
            outcome(pal_corr - base_corr >= 0.1 && in_time, format!("prior-trained {pal_corr:.4} vs baseline {base_corr:.4} (gain {:.4}); {timing}", pal_corr - base_corr)),
        ),
        (
            "5b accuracy vs baseline".into(),
            outcome(pal_acc >= base_acc && in_time, format!("prior-trained {pal_acc:.4} vs baseline {base_acc:.4}; {timing}")),
        ),
        (
            "5c half vs all channels".into(),
            outcome(pal_acc >= all_acc && in_time, format!("mean-of-half {pal_acc:.4} vs all-channels {all_acc:.4}; {timing}")),
        ),
    ]
}

fn main() {
    let mut results: Vec<(String, Outcome)> = Vec::new();
    let mut run = |name: &str, f: fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        println!("[{}] {name}: {} ({:.1}s)", if o.pass { "PASS" } else { "FAIL" }, o.detail, t.elapsed().as_secs_f64());
        results.push((name.to_string(), o));
    };
    run("1 gradient path vs finite differences", gradient_path);
    run("2 exact contribution identity", exact_contribution);
    run("3 prior-loss invariants", pal_invariants);
    run("4 prior heatmap", prior_correctness);
    run("6 pre-pool sparsity", sparsity);
    run("7 determinism and baseline equivalence", determinism);
    for (name, o) in training_effect() {
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    }
    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| n.as_str()).collect();
    println!("acceptance: {} of {} passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
