//! Generates a small synthetic dataset on disk, reloads it and shows the
//! class layout and one augmentation.
//!
//! ```bash
//! cargo run --example synth_dataset
//! ```

use std::path::Path;

use pal::data::synth::class_patterns;
use pal::data::{augment, generate_dataset, load_dataset, mask_evidence, pgm, SynthConfig};
use pal::rng;

fn main() -> pal::Result<()> {
    let dir = Path::new("out/synth");
    let cfg = SynthConfig::default();
    let m = generate_dataset(dir, 0, 70, "train", &cfg)?;
    println!("{} entries, class counts {:?}", m.entries.len(), m.class_counts());
    for label in 0..cfg.n_classes {
        let (eye, mouth) = class_patterns(label);
        println!("class {label}: eyes {eye:?}, mouth {mouth:?}");
    }

    let ds = load_dataset(&dir.join("train.json"))?;
    let s = &ds.samples[0];
    let aug = augment(s, &mut rng::stream(0, &["example".into()]))?;
    pgm::write_unit(&dir.join("augmented.pgm"), &aug.image)?;
    pgm::write_unit(&dir.join("masked.pgm"), &mask_evidence(s).image)?;
    println!("landmarks before:\n{}after:\n{}", s.landmarks.to_text(), aug.landmarks.to_text());
    println!("wrote {}", dir.display());
    Ok(())
}
