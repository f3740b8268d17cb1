//! Binary (P5) graymap reading and writing.

use std::fs;
use std::path::Path;

use crate::autodiff::Array;
use crate::error::{Error, Result};

/// Encodes an `H×W` image with values in `[0, 1]` as 8-bit P5.
pub fn encode_unit(image: &Array) -> Result<Vec<u8>> {
    let (h, w) = hw(image)?;
    let pixels: Vec<u8> = image
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    Ok(encode_raw(w, h, &pixels))
}

pub fn encode_raw(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Min-max normalizes a map to 0..=255. A constant map becomes uniform 128.
pub fn normalize_to_u8(values: &[f64]) -> Vec<u8> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![128; values.len()];
    }
    values
        .iter()
        .map(|v| ((v - lo) / (hi - lo) * 255.0).round() as u8)
        .collect()
}

fn hw(image: &Array) -> Result<(usize, usize)> {
    match *image.shape() {
        [h, w] => Ok((h, w)),
        _ => Err(Error::invalid(format!("image must be H×W, got {:?}", image.shape()))),
    }
}

pub fn write_unit(path: &Path, image: &Array) -> Result<()> {
    fs::write(path, encode_unit(image)?).map_err(|e| Error::io(path, e))
}

pub fn write_normalized(path: &Path, values: &[f64], width: usize, height: usize) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::invalid("map size does not match dimensions"));
    }
    fs::write(path, encode_raw(width, height, &normalize_to_u8(values))).map_err(|e| Error::io(path, e))
}

/// Decodes P5 bytes into an `H×W` array scaled to `[0, 1]`.
pub fn decode(bytes: &[u8], path: &Path) -> Result<Array> {
    let corrupt = |msg: &str| Error::format(path, format!("corrupt PGM header: {msg}"));
    let mut pos = 0;
    let mut token = || -> Option<&[u8]> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| &bytes[start..pos])
    };
    if token() != Some(b"P5") {
        return Err(corrupt("missing P5 magic"));
    }
    let mut number = |what: &str| -> Result<usize> {
        let t = token().ok_or_else(|| corrupt(&format!("missing {what}")))?;
        std::str::from_utf8(t)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| corrupt(&format!("bad {what}")))
    };
    let w = number("width")?;
    let h = number("height")?;
    let maxval = number("maxval")?;
    if w == 0 || h == 0 || maxval == 0 || maxval > 255 {
        return Err(corrupt("unsupported dimensions or maxval"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let data = bytes.get(pos + 1..).ok_or_else(|| corrupt("no raster"))?;
    if data.len() < w * h {
        return Err(Error::format(path, format!("truncated raster: {} of {} bytes", data.len(), w * h)));
    }
    let scale = 1.0 / maxval as f64;
    Array::new(vec![h, w], data[..w * h].iter().map(|&b| f64::from(b) * scale).collect())
}

pub fn read(path: &Path) -> Result<Array> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
