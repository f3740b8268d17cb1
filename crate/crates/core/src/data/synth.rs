//! Synthetic keypoint classification images.
//!
//! Each image carries five jittered keypoints: two eyes, a nose and two mouth
//! corners. The class is encoded only by the stroke pattern stamped at the
//! eyes and at the mouth corners; label-independent bars are scattered
//! elsewhere as distractors. Every pattern is mirror-symmetric, so a
//! horizontal flip never changes the label.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::Sample;
use crate::autodiff::Array;
use crate::error::{Error, Result};
use crate::prior::{LandmarkSet, Point};
use crate::rng;

/// Keypoints of the synthetic face, in order.
pub const KEYPOINT_NAMES: [&str; 5] = ["left_eye", "right_eye", "nose", "mouth_left", "mouth_right"];

/// Canonical keypoint positions as fractions of (width, height).
const CANONICAL: [(f64, f64); 5] = [(0.31, 0.34), (0.69, 0.34), (0.5, 0.53), (0.36, 0.72), (0.64, 0.72)];

/// Half-extent of a stamped pattern, in pixels.
pub const PATCH_RADIUS: usize = 3;
/// Half-extent of the square that fully covers a keypoint's pattern.
pub const MASK_RADIUS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pattern {
    Horizontal,
    Vertical,
    Cross,
}

/// (eye pattern, mouth pattern) per class.
const CLASS_PATTERNS: [(Pattern, Pattern); 9] = {
    use Pattern::*;
    [
        (Horizontal, Horizontal),
        (Vertical, Vertical),
        (Cross, Cross),
        (Horizontal, Vertical),
        (Vertical, Horizontal),
        (Horizontal, Cross),
        (Cross, Horizontal),
        (Vertical, Cross),
        (Cross, Vertical),
    ]
};

pub const MAX_CLASSES: usize = CLASS_PATTERNS.len();

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub height: usize,
    pub width: usize,
    pub landmarks: usize,
    pub noise_sigma: f64,
    pub distractors: (usize, usize),
    /// Uniform keypoint jitter, in pixels.
    pub jitter: f64,
    pub background: f64,
    /// Amplitude of distractor bars.
    pub stroke: f64,
    /// Amplitude of the class patterns at the keypoints.
    pub evidence_stroke: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_classes: 7,
            height: 64,
            width: 64,
            landmarks: 5,
            noise_sigma: 0.05,
            distractors: (6, 10),
            jitter: 2.5,
            background: 0.1,
            stroke: 0.8,
            evidence_stroke: 0.8,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 32 || self.width < 32 {
            return Err(Error::invalid(format!(
                "canvas {}x{} too small for patches (need at least 32x32)",
                self.height, self.width
            )));
        }
        if self.landmarks != KEYPOINT_NAMES.len() {
            return Err(Error::invalid("the synthetic generator places exactly 5 keypoints"));
        }
        if self.n_classes < 2 || self.n_classes > MAX_CLASSES {
            return Err(Error::invalid(format!("n_classes must be in 2..={MAX_CLASSES}")));
        }
        if self.distractors.0 > self.distractors.1 {
            return Err(Error::invalid("distractor range is reversed"));
        }
        Ok(())
    }
}

pub fn class_patterns(label: usize) -> (Pattern, Pattern) {
    CLASS_PATTERNS[label]
}

struct Canvas {
    h: usize,
    w: usize,
    px: Vec<f64>,
}

impl Canvas {
    /// Anti-aliased segment through `(cx, cy)` at `angle` radians, merged
    /// with `max`.
    fn bar(&mut self, cx: f64, cy: f64, angle: f64, amplitude: f64) {
        let r = PATCH_RADIUS as f64;
        let (dy, dx) = angle.sin_cos();
        let (x0, y0) = (cx - r * dx, cy - r * dy);
        let (ix0, ix1) = ((cx - r - 1.0).floor().max(0.0) as usize, ((cx + r + 1.0).ceil() as usize).min(self.w - 1));
        let (iy0, iy1) = ((cy - r - 1.0).floor().max(0.0) as usize, ((cy + r + 1.0).ceil() as usize).min(self.h - 1));
        for y in iy0..=iy1 {
            for x in ix0..=ix1 {
                let (px, py) = (x as f64 - x0, y as f64 - y0);
                let t = (px * dx + py * dy).clamp(0.0, 2.0 * r);
                let d = ((px - t * dx).powi(2) + (py - t * dy).powi(2)).sqrt();
                let v = amplitude * (1.2 - d).clamp(0.0, 1.0);
                let slot = &mut self.px[y * self.w + x];
                *slot = slot.max(v);
            }
        }
    }

    fn pattern(&mut self, p: Point, pattern: Pattern, amplitude: f64) {
        use std::f64::consts::FRAC_PI_4;
        match pattern {
            Pattern::Horizontal => self.bar(p.x, p.y, 0.0, amplitude),
            Pattern::Vertical => self.bar(p.x, p.y, 2.0 * FRAC_PI_4, amplitude),
            Pattern::Cross => {
                self.bar(p.x, p.y, FRAC_PI_4, amplitude);
                self.bar(p.x, p.y, 3.0 * FRAC_PI_4, amplitude);
            }
        }
    }
}

/// Sample `index` of the stream `split` under `seed`. Depends on nothing
/// else, so samples can be generated independently and in any order.
pub fn synth_sample(seed: u64, split: &str, index: usize, label: usize, cfg: &SynthConfig) -> Result<Sample> {
    cfg.validate()?;
    if label >= cfg.n_classes {
        return Err(Error::invalid(format!("label {label} out of range")));
    }
    let mut r = rng::stream(seed, &["synth".into(), split.into(), index.into()]);
    let (h, w) = (cfg.height, cfg.width);
    let points: Vec<Point> = CANONICAL
        .iter()
        .map(|&(fx, fy)| Point {
            x: (fx * (w - 1) as f64 + r.gen_range(-cfg.jitter..=cfg.jitter)).round(),
            y: (fy * (h - 1) as f64 + r.gen_range(-cfg.jitter..=cfg.jitter)).round(),
        })
        .collect();

    let mut canvas = Canvas {
        h,
        w,
        px: vec![0.0; h * w],
    };
    let (eye, mouth) = class_patterns(label);
    canvas.pattern(points[0], eye, cfg.evidence_stroke);
    canvas.pattern(points[1], eye, cfg.evidence_stroke);
    canvas.pattern(points[3], mouth, cfg.evidence_stroke);
    canvas.pattern(points[4], mouth, cfg.evidence_stroke);

    let n_distractors = r.gen_range(cfg.distractors.0..=cfg.distractors.1);
    let margin = (PATCH_RADIUS + 1) as f64;
    let keep_out = (PATCH_RADIUS + MASK_RADIUS + 1) as f64;
    let mut placed = 0;
    let mut tries = 0;
    while placed < n_distractors && tries < 1000 {
        tries += 1;
        let p = Point {
            x: r.gen_range(margin..(w as f64 - 1.0 - margin)).round(),
            y: r.gen_range(margin..(h as f64 - 1.0 - margin)).round(),
        };
        let angle = r.gen_range(0.0..std::f64::consts::PI);
        if points
            .iter()
            .any(|k| (k.x - p.x).abs() < keep_out && (k.y - p.y).abs() < keep_out)
        {
            continue;
        }
        canvas.bar(p.x, p.y, angle, cfg.stroke);
        placed += 1;
    }

    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let px = canvas
        .px
        .iter()
        .map(|&v| (cfg.background + v + noise.sample(&mut r)).clamp(0.0, 1.0))
        .collect();
    Ok(Sample {
        image: Array::new(vec![h, w], px)?,
        landmarks: LandmarkSet::new(points),
        label,
    })
}

/// Zeroes the `(2·MASK_RADIUS+1)²` square around each eye and mouth keypoint.
pub fn mask_evidence(sample: &Sample) -> Sample {
    let (h, w) = (sample.image.shape()[0], sample.image.shape()[1]);
    let mut px = sample.image.to_vec();
    for (i, p) in sample.landmarks.points.iter().enumerate() {
        if i == 2 {
            continue;
        }
        let (cx, cy) = (p.x.round() as isize, p.y.round() as isize);
        let r = MASK_RADIUS as isize;
        for y in (cy - r).max(0)..=(cy + r).min(h as isize - 1) {
            for x in (cx - r).max(0)..=(cx + r).min(w as isize - 1) {
                px[y as usize * w + x as usize] = 0.0;
            }
        }
    }
    Sample {
        image: Array::new(vec![h, w], px).expect("same shape"),
        ..sample.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_reproducible() {
        let cfg = SynthConfig::default();
        let a = synth_sample(3, "train", 7, 2, &cfg).unwrap();
        let b = synth_sample(3, "train", 7, 2, &cfg).unwrap();
        let c = synth_sample(3, "test", 7, 2, &cfg).unwrap();
        assert!(a.image.bit_eq(&b.image));
        assert!(!a.image.bit_eq(&c.image));
        assert!(a.landmarks.on_canvas(64, 64));
        assert!(a.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn classes_have_distinct_patterns() {
        let cfg = SynthConfig::default();
        let mut seen = std::collections::HashSet::new();
        for l in 0..cfg.n_classes {
            assert!(seen.insert(format!("{:?}", class_patterns(l))));
        }
    }

    #[test]
    fn small_canvas_is_rejected() {
        let cfg = SynthConfig {
            height: 16,
            width: 16,
            ..SynthConfig::default()
        };
        assert!(synth_sample(0, "train", 0, 0, &cfg).is_err());
    }
}
