use rand::Rng as _;

use super::Sample;
use crate::autodiff::Array;
use crate::error::Result;
use crate::prior::transform_landmarks;
use crate::rng::Rng;

/// Maximum absolute rotation drawn by [`augment`], in degrees.
pub const MAX_ROTATION: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub degrees: f64,
    pub flip: bool,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        degrees: 0.0,
        flip: false,
    };

    pub fn draw(rng: &mut Rng) -> Self {
        let degrees = rng.gen_range(-MAX_ROTATION..=MAX_ROTATION);
        let flip = rng.gen_bool(0.5);
        AugmentParams { degrees, flip }
    }
}

/// Rotates `image` by `degrees` about its centre with bilinear resampling
/// and zero fill, then mirrors it horizontally when `flip`.
pub fn rotate_image(image: &Array, degrees: f64, flip: bool) -> Array {
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let src = image.data();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (s, c) = degrees.to_radians().sin_cos();
    let sample = |x: f64, y: f64| -> f64 {
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let mut acc = 0.0;
        for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
            for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
                let (xi, yi) = (x0 + dx, y0 + dy);
                if wx * wy == 0.0 || xi < 0.0 || yi < 0.0 || xi >= w as f64 || yi >= h as f64 {
                    continue;
                }
                acc += wx * wy * src[yi as usize * w + xi as usize];
            }
        }
        acc
    };
    let mut out = vec![0.0; h * w];
    for yo in 0..h {
        for xo in 0..w {
            // Undo the flip, then the rotation, to find the source position.
            let xr = if flip { (w - 1 - xo) as f64 } else { xo as f64 };
            let (dx, dy) = (xr - cx, yo as f64 - cy);
            let xs = cx + c * dx + s * dy;
            let ys = cy - s * dx + c * dy;
            out[yo * w + xo] = sample(xs, ys);
        }
    }
    Array::new(vec![h, w], out).expect("same shape")
}

/// Applies a fixed rotation/flip to the image and its landmarks.
pub fn augment_with(sample: &Sample, params: AugmentParams) -> Result<Sample> {
    if params == AugmentParams::IDENTITY {
        return Ok(sample.clone());
    }
    let (h, w) = (sample.height(), sample.width());
    Ok(Sample {
        image: rotate_image(&sample.image, params.degrees, params.flip),
        landmarks: transform_landmarks(&sample.landmarks, params.degrees, params.flip, h, w)?,
        label: sample.label,
    })
}

/// Random rotation in `[-10°, 10°]` followed by a horizontal flip with
/// probability 0.5, applied consistently to image and landmarks.
pub fn augment(sample: &Sample, rng: &mut Rng) -> Result<Sample> {
    augment_with(sample, AugmentParams::draw(rng))
}
