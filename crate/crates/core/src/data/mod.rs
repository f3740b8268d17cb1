//! Samples, on-disk datasets and augmentation.

pub mod augment;
pub mod manifest;
pub mod pgm;
pub mod synth;

use crate::autodiff::Array;
use crate::prior::LandmarkSet;

pub use augment::{augment, augment_with, rotate_image, AugmentParams};
pub use manifest::{generate_dataset, load_dataset, load_manifest, load_sample, Dataset, DatasetManifest, ManifestEntry};
pub use synth::{mask_evidence, synth_sample, SynthConfig};

/// A grayscale `H×W` image in `[0, 1]` with its landmarks and class label.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Array,
    pub landmarks: LandmarkSet,
    pub label: usize,
}

impl Sample {
    pub fn height(&self) -> usize {
        self.image.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[1]
    }
}
