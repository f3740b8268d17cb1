use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synth::{synth_sample, SynthConfig};
use super::{pgm, Sample};
use crate::backbone::write_atomic;
use crate::error::{Error, Result};
use crate::prior::LandmarkSet;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub landmarks: PathBuf,
    pub label: usize,
}

/// Dataset index. `root` is resolved relative to the manifest file's
/// directory; entry paths are relative to `root`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub n_classes: usize,
    pub split: String,
    /// Landmarks expected per sample.
    pub landmarks_per_sample: usize,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for e in &self.entries {
            if let Some(c) = counts.get_mut(e.label) {
                *c += 1;
            }
        }
        counts
    }

    /// Labels in range and every referenced file present.
    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            if e.label >= self.n_classes {
                return Err(Error::invalid(format!(
                    "entry {i} ({}): label {} outside the {} declared classes",
                    e.image.display(),
                    e.label,
                    self.n_classes
                )));
            }
            for p in [&e.image, &e.landmarks] {
                let full = self.root.join(p);
                if !full.is_file() {
                    return Err(Error::invalid(format!(
                        "entry {i} ({}): missing file {}",
                        e.image.display(),
                        full.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut stored = self.clone();
        stored.root = PathBuf::from(".");
        let text = serde_json::to_string_pretty(&stored)? + "\n";
        write_atomic(path, text.as_bytes())
    }
}

/// Reads and validates a manifest, resolving its root.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut m: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::format(path, format!("bad manifest: {e}")))?;
    let base = path.parent().unwrap_or(Path::new("."));
    m.root = base.join(&m.root);
    m.validate()?;
    Ok(m)
}

pub fn load_sample(manifest: &DatasetManifest, entry: &ManifestEntry) -> Result<Sample> {
    let image = pgm::read(&manifest.root.join(&entry.image))?;
    let lm_path = manifest.root.join(&entry.landmarks);
    let landmarks = LandmarkSet::load(&lm_path)?;
    if landmarks.len() != manifest.landmarks_per_sample {
        return Err(Error::format(
            &lm_path,
            format!(
                "landmark count mismatch: expected {}, found {}",
                manifest.landmarks_per_sample,
                landmarks.len()
            ),
        ));
    }
    Ok(Sample {
        image,
        landmarks,
        label: entry.label,
    })
}

/// A fully loaded split.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `n` class-balanced synthetic samples held in memory; identical to
    /// what [`generate_dataset`] writes, before 8-bit quantization.
    pub fn synthetic(seed: u64, n: usize, split: &str, cfg: &SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let samples = (0..n)
            .map(|i| synth_sample(seed, split, i, i % cfg.n_classes, cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            samples,
            n_classes: cfg.n_classes,
        })
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Splits off `fraction` of every class (the last ones in order) as a
    /// validation set with the same label distribution.
    pub fn stratified_split(&self, fraction: f64) -> (Dataset, Dataset) {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); self.n_classes];
        for (i, s) in self.samples.iter().enumerate() {
            by_class[s.label].push(i);
        }
        let mut val_idx = Vec::new();
        for idx in &by_class {
            let k = (idx.len() as f64 * fraction).round() as usize;
            val_idx.extend_from_slice(&idx[idx.len() - k..]);
        }
        val_idx.sort_unstable();
        let mut train = Vec::new();
        let mut val = Vec::new();
        for (i, s) in self.samples.iter().enumerate() {
            if val_idx.binary_search(&i).is_ok() {
                val.push(s.clone());
            } else {
                train.push(s.clone());
            }
        }
        (
            Dataset {
                samples: train,
                n_classes: self.n_classes,
            },
            Dataset {
                samples: val,
                n_classes: self.n_classes,
            },
        )
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let m = load_manifest(path)?;
    let samples = m.entries.iter().map(|e| load_sample(&m, e)).collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        samples,
        n_classes: m.n_classes,
    })
}

/// Writes `n` class-balanced synthetic samples (labels cycle through the
/// classes) under `dir`, plus `dir/{split}.json`. Output bytes depend only
/// on `(seed, split, n, cfg)`.
pub fn generate_dataset(dir: &Path, seed: u64, n: usize, split: &str, cfg: &SynthConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    if n < cfg.n_classes {
        return Err(Error::invalid(format!("need at least {} samples, got {n}", cfg.n_classes)));
    }
    let sub = PathBuf::from(split);
    fs::create_dir_all(dir.join(&sub)).map_err(|e| Error::io(dir.join(&sub), e))?;
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % cfg.n_classes;
        let s = synth_sample(seed, split, i, label, cfg)?;
        let image = sub.join(format!("{i:06}.pgm"));
        let landmarks = sub.join(format!("{i:06}.txt"));
        pgm::write_unit(&dir.join(&image), &s.image)?;
        s.landmarks.save(&dir.join(&landmarks))?;
        entries.push(ManifestEntry { image, landmarks, label });
    }
    let manifest = DatasetManifest {
        root: dir.to_path_buf(),
        n_classes: cfg.n_classes,
        split: split.to_string(),
        landmarks_per_sample: cfg.landmarks,
        entries,
    };
    manifest.save(&dir.join(format!("{split}.json")))?;
    Ok(manifest)
}
