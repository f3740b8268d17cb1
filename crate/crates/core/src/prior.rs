//! Landmark-derived prior heatmaps.
//!
//! Landmarks are `(x, y)` pixel coordinates with the origin at the centre of
//! the top-left pixel; `x` indexes columns and `y` rows.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::autodiff::Array;
use crate::error::{Error, Result};

/// Default Gaussian spread of the prior, in input pixels.
pub const DEFAULT_SIGMA: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LandmarkSet {
    pub points: Vec<Point>,
    /// Number of points clamped back onto the canvas by the last transform.
    pub clamped: usize,
}

impl LandmarkSet {
    pub fn new(points: Vec<Point>) -> Self {
        LandmarkSet { points, clamped: 0 }
    }

    pub fn from_xy(xy: &[(f64, f64)]) -> Self {
        LandmarkSet::new(xy.iter().map(|&(x, y)| Point { x, y }).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn on_canvas(&self, h: usize, w: usize) -> bool {
        self.points
            .iter()
            .all(|p| p.x >= 0.0 && p.x < w as f64 && p.y >= 0.0 && p.y < h as f64)
    }

    /// One `x y` pair per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for p in &self.points {
            let _ = writeln!(s, "{} {}", p.x, p.y);
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let mut coord = |what| -> Result<f64> {
                it.next()
                    .ok_or_else(|| Error::format(path, format!("line {}: missing {what}", i + 1)))?
                    .parse::<f64>()
                    .map_err(|e| Error::format(path, format!("line {}: bad {what}: {e}", i + 1)))
            };
            let x = coord("x")?;
            let y = coord("y")?;
            if it.next().is_some() {
                return Err(Error::format(path, format!("line {}: expected two values", i + 1)));
            }
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::format(path, format!("line {}: non-finite coordinate", i + 1)));
            }
            points.push(Point { x, y });
        }
        Ok(LandmarkSet::new(points))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// A 2-D prior map of shape `h×w`.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorHeatmap {
    pub values: Array,
    pub standardized: bool,
}

impl PriorHeatmap {
    pub fn resolution(&self) -> (usize, usize) {
        (self.values.shape()[0], self.values.shape()[1])
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values.data()[i * self.values.shape()[1] + j]
    }
}

fn nearest_pixel(v: f64, extent: usize) -> usize {
    (v.round().max(0.0) as usize).min(extent - 1)
}

/// Sum of unit impulses at the nearest pixel of every landmark.
pub fn rasterize_landmarks(lms: &LandmarkSet, h: usize, w: usize) -> PriorHeatmap {
    let mut data = vec![0.0; h * w];
    for p in &lms.points {
        data[nearest_pixel(p.y, h) * w + nearest_pixel(p.x, w)] += 1.0;
    }
    PriorHeatmap {
        values: Array::new(vec![h, w], data).expect("h*w values"),
        standardized: false,
    }
}

/// Closed-form Gaussian-filtered impulses:
/// `Σ_k exp(-((i - y_k)² + (j - x_k)²) / 2σ²) / √(2πσ²)`.
pub fn gaussian_heatmap(lms: &LandmarkSet, h: usize, w: usize, sigma: f64) -> Result<PriorHeatmap> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let norm = 1.0 / (2.0 * std::f64::consts::PI * sigma * sigma).sqrt();
    let denom = 2.0 * sigma * sigma;
    let mut data = vec![0.0; h * w];
    for p in &lms.points {
        for i in 0..h {
            let dy = i as f64 - p.y;
            let row = &mut data[i * w..][..w];
            for (j, v) in row.iter_mut().enumerate() {
                let dx = j as f64 - p.x;
                *v += norm * (-(dy * dy + dx * dx) / denom).exp();
            }
        }
    }
    Ok(PriorHeatmap {
        values: Array::new(vec![h, w], data)?,
        standardized: false,
    })
}

/// Zero mean, unit population variance over all pixels.
pub fn standardize_map(map: &PriorHeatmap) -> Result<PriorHeatmap> {
    let d = map.values.data();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 0.0) || !std.is_finite() || d.iter().all(|&v| v == d[0]) {
        return Err(Error::DegeneratePrior);
    }
    Ok(PriorHeatmap {
        values: map.values.map(|v| (v - mean) / std),
        standardized: true,
    })
}

/// Block-average pooling to `(h_l, w_l)` followed by re-standardization.
pub fn match_resolution(map: &PriorHeatmap, h_l: usize, w_l: usize) -> Result<PriorHeatmap> {
    let (h, w) = map.resolution();
    if h_l == 0 || w_l == 0 || h_l > h || w_l > w || h % h_l != 0 || w % w_l != 0 {
        return Err(Error::invalid(format!(
            "cannot downscale {h}x{w} to {h_l}x{w_l} by an integer factor"
        )));
    }
    let (fy, fx) = (h / h_l, w / w_l);
    let src = map.values.data();
    let mut out = vec![0.0; h_l * w_l];
    for i in 0..h {
        for j in 0..w {
            out[(i / fy) * w_l + j / fx] += src[i * w + j];
        }
    }
    let inv = 1.0 / (fy * fx) as f64;
    out.iter_mut().for_each(|v| *v *= inv);
    standardize_map(&PriorHeatmap {
        values: Array::new(vec![h_l, w_l], out)?,
        standardized: false,
    })
}

/// The full prior pipeline: Gaussian map at input resolution, pooled to the
/// tap resolution, standardized.
pub fn build_prior(
    lms: &LandmarkSet,
    input_hw: (usize, usize),
    tap_hw: (usize, usize),
    sigma: f64,
) -> Result<PriorHeatmap> {
    let full = gaussian_heatmap(lms, input_hw.0, input_hw.1, sigma)?;
    match_resolution(&full, tap_hw.0, tap_hw.1)
}

/// Rotation by `degrees` about the image centre (same convention as the
/// image augmenter), then a horizontal mirror `x → W-1-x` when `flip`.
/// Points pushed off the canvas are clamped and counted in `clamped`.
pub fn transform_landmarks(lms: &LandmarkSet, degrees: f64, flip: bool, h: usize, w: usize) -> Result<LandmarkSet> {
    if degrees.abs() > 45.0 {
        return Err(Error::invalid(format!("rotation {degrees}° outside [-45, 45]")));
    }
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (s, c) = degrees.to_radians().sin_cos();
    let mut clamped = 0;
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;
    let points = lms
        .points
        .iter()
        .map(|p| {
            let (dx, dy) = (p.x - cx, p.y - cy);
            let mut x = cx + c * dx - s * dy;
            let y = cy + s * dx + c * dy;
            if flip {
                x = max_x - x;
            }
            let (xc, yc) = (x.clamp(0.0, max_x), y.clamp(0.0, max_y));
            if xc != x || yc != y {
                clamped += 1;
            }
            Point { x: xc, y: yc }
        })
        .collect();
    Ok(LandmarkSet { points, clamped })
}
