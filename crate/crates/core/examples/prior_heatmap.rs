//! Landmark prior: Gaussian map at input resolution, pooled to a tap's
//! resolution and standardized. Writes PGM previews to `out/prior/`.
//!
//! ```bash
//! cargo run --example prior_heatmap
//! ```

use std::path::Path;

use pal::data::{pgm, synth_sample, SynthConfig};
use pal::prior::{build_prior, gaussian_heatmap, transform_landmarks, DEFAULT_SIGMA};

fn main() -> pal::Result<()> {
    let out = Path::new("out/prior");
    std::fs::create_dir_all(out).map_err(|e| pal::Error::io(out, e))?;

    let sample = synth_sample(0, "train", 0, 3, &SynthConfig::default())?;
    println!("landmarks:\n{}", sample.landmarks.to_text());

    let full = gaussian_heatmap(&sample.landmarks, 64, 64, DEFAULT_SIGMA)?;
    let peak = full.values.data().iter().copied().fold(f64::MIN, f64::max);
    println!("raw peak {peak:.6} (single isolated landmark: {:.6})", 1.0 / (18.0 * std::f64::consts::PI).sqrt());

    for (h, w) in [(64, 64), (32, 32), (16, 16)] {
        let p = build_prior(&sample.landmarks, (64, 64), (h, w), DEFAULT_SIGMA)?;
        let d = p.values.data();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64;
        println!("{h}x{w}: mean {mean:+.2e} var {var:.12}");
        pgm::write_normalized(&out.join(format!("prior_{h}.pgm")), d, w, h)?;
    }

    // The prior follows the image under augmentation.
    let moved = transform_landmarks(&sample.landmarks, 8.0, true, 64, 64)?;
    let p = build_prior(&moved, (64, 64), (64, 64), DEFAULT_SIGMA)?;
    pgm::write_normalized(&out.join("prior_rot8_flip.pgm"), p.values.data(), 64, 64)?;
    pgm::write_unit(&out.join("image.pgm"), &sample.image)?;
    println!("wrote {}", out.display());
    Ok(())
}
