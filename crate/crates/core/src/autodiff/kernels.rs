//! Raw numeric kernels over [`Array`] values. No tape involvement.

use super::array::Array;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    pub fn out_len(&self, input: usize, k: usize) -> usize {
        (input + 2 * self.padding - k) / self.stride + 1
    }
}

/// Range of output positions `o` for which `o * stride + offset` lands in
/// `[0, in_len)`.
fn valid_range(out_len: usize, in_len: usize, stride: usize, offset: isize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 { 0 } else { ((-offset) + s - 1) / s };
    let last_in = in_len as isize - 1 - offset;
    if last_in < 0 {
        return (0, 0);
    }
    let hi = (last_in / s + 1).min(out_len as isize);
    let lo = lo.min(hi);
    (lo as usize, hi as usize)
}

fn dims4(a: &Array, what: &'static str) -> Result<[usize; 4]> {
    match *a.shape() {
        [n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(Error::invalid(format!(
            "{what} must be 4-D, got shape {:?}",
            a.shape()
        ))),
    }
}

pub(crate) fn check_conv(x: &Array, w: &Array, geom: ConvGeom) -> Result<()> {
    let [_, c, h, wd] = dims4(x, "conv2d input")?;
    let [_, ci, kh, kw] = dims4(w, "conv2d weight")?;
    if ci != c {
        return Err(Error::ShapeMismatch {
            op: "conv2d channels",
            lhs: x.shape().to_vec(),
            rhs: w.shape().to_vec(),
        });
    }
    if kh != kw {
        return Err(Error::invalid("conv2d kernels must be square"));
    }
    if geom.stride == 0 {
        return Err(Error::invalid("conv2d stride must be positive"));
    }
    if kh > h + 2 * geom.padding || kw > wd + 2 * geom.padding {
        return Err(Error::invalid(format!(
            "conv2d kernel {kh}x{kw} larger than padded input {}x{}",
            h + 2 * geom.padding,
            wd + 2 * geom.padding
        )));
    }
    Ok(())
}

/// Cross-correlation, NCHW input and OIkk weight.
pub(crate) fn conv2d(x: &Array, w: &Array, geom: ConvGeom) -> Result<Array> {
    check_conv(x, w, geom)?;
    let [n, c, h, wd] = dims4(x, "")?;
    let [o, _, k, _] = dims4(w, "")?;
    let (oh, ow) = (geom.out_len(h, k), geom.out_len(wd, k));
    let (xd, wdta) = (x.data(), w.data());
    let mut out = vec![0.0; n * o * oh * ow];
    let p = geom.padding as isize;
    let s = geom.stride;
    for ni in 0..n {
        for oi in 0..o {
            let plane = &mut out[(ni * o + oi) * oh * ow..][..oh * ow];
            for ci in 0..c {
                let xplane = &xd[(ni * c + ci) * h * wd..][..h * wd];
                for ky in 0..k {
                    let (oy0, oy1) = valid_range(oh, h, s, ky as isize - p);
                    for kx in 0..k {
                        let wv = wdta[((oi * c + ci) * k + ky) * k + kx];
                        let (ox0, ox1) = valid_range(ow, wd, s, kx as isize - p);
                        if ox0 >= ox1 {
                            continue;
                        }
                        for oy in oy0..oy1 {
                            let iy = (oy * s) as isize + ky as isize - p;
                            let xrow = &xplane[iy as usize * wd..][..wd];
                            let orow = &mut plane[oy * ow..][..ow];
                            let ix0 = ((ox0 * s) as isize + kx as isize - p) as usize;
                            if s == 1 {
                                let len = ox1 - ox0;
                                for (dst, src) in orow[ox0..ox1].iter_mut().zip(&xrow[ix0..ix0 + len]) {
                                    *dst += wv * src;
                                }
                            } else {
                                for (j, dst) in orow[ox0..ox1].iter_mut().enumerate() {
                                    *dst += wv * xrow[ix0 + j * s];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Array::from_parts(vec![n, o, oh, ow], out))
}

/// Adjoint of [`conv2d`] with respect to its input: maps an output-shaped
/// `g` back to input shape `(in_h, in_w)`.
pub(crate) fn conv2d_input_grad(
    g: &Array,
    w: &Array,
    geom: ConvGeom,
    in_hw: (usize, usize),
) -> Result<Array> {
    let [n, o, oh, ow] = dims4(g, "conv2d_input_grad upstream")?;
    let [wo, c, k, _] = dims4(w, "conv2d weight")?;
    if wo != o {
        return Err(Error::ShapeMismatch {
            op: "conv2d_input_grad",
            lhs: g.shape().to_vec(),
            rhs: w.shape().to_vec(),
        });
    }
    let (h, wd) = in_hw;
    if geom.out_len(h, k) != oh || geom.out_len(wd, k) != ow {
        return Err(Error::invalid("conv2d_input_grad: inconsistent spatial sizes"));
    }
    let (gd, wdta) = (g.data(), w.data());
    let mut out = vec![0.0; n * c * h * wd];
    let p = geom.padding as isize;
    let s = geom.stride;
    for ni in 0..n {
        for oi in 0..o {
            let gplane = &gd[(ni * o + oi) * oh * ow..][..oh * ow];
            for ci in 0..c {
                let xplane = &mut out[(ni * c + ci) * h * wd..][..h * wd];
                for ky in 0..k {
                    let (oy0, oy1) = valid_range(oh, h, s, ky as isize - p);
                    for kx in 0..k {
                        let wv = wdta[((oi * c + ci) * k + ky) * k + kx];
                        let (ox0, ox1) = valid_range(ow, wd, s, kx as isize - p);
                        if ox0 >= ox1 {
                            continue;
                        }
                        for oy in oy0..oy1 {
                            let iy = (oy * s) as isize + ky as isize - p;
                            let xrow = &mut xplane[iy as usize * wd..][..wd];
                            let grow = &gplane[oy * ow..][..ow];
                            let ix0 = ((ox0 * s) as isize + kx as isize - p) as usize;
                            if s == 1 {
                                let len = ox1 - ox0;
                                for (dst, src) in xrow[ix0..ix0 + len].iter_mut().zip(&grow[ox0..ox1]) {
                                    *dst += wv * src;
                                }
                            } else {
                                for (j, src) in grow[ox0..ox1].iter().enumerate() {
                                    xrow[ix0 + j * s] += wv * src;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Array::from_parts(vec![n, c, h, wd], out))
}

/// Adjoint of [`conv2d`] with respect to its weight.
pub(crate) fn conv2d_weight_grad(x: &Array, g: &Array, geom: ConvGeom, k: usize) -> Result<Array> {
    let [n, c, h, wd] = dims4(x, "conv2d input")?;
    let [gn, o, oh, ow] = dims4(g, "conv2d_weight_grad upstream")?;
    if gn != n || geom.out_len(h, k) != oh || geom.out_len(wd, k) != ow {
        return Err(Error::ShapeMismatch {
            op: "conv2d_weight_grad",
            lhs: x.shape().to_vec(),
            rhs: g.shape().to_vec(),
        });
    }
    let (xd, gd) = (x.data(), g.data());
    let mut out = vec![0.0; o * c * k * k];
    let p = geom.padding as isize;
    let s = geom.stride;
    for ni in 0..n {
        for oi in 0..o {
            let gplane = &gd[(ni * o + oi) * oh * ow..][..oh * ow];
            for ci in 0..c {
                let xplane = &xd[(ni * c + ci) * h * wd..][..h * wd];
                for ky in 0..k {
                    let (oy0, oy1) = valid_range(oh, h, s, ky as isize - p);
                    for kx in 0..k {
                        let (ox0, ox1) = valid_range(ow, wd, s, kx as isize - p);
                        if ox0 >= ox1 {
                            continue;
                        }
                        let mut acc = 0.0;
                        for oy in oy0..oy1 {
                            let iy = (oy * s) as isize + ky as isize - p;
                            let xrow = &xplane[iy as usize * wd..][..wd];
                            let grow = &gplane[oy * ow..][..ow];
                            let ix0 = ((ox0 * s) as isize + kx as isize - p) as usize;
                            if s == 1 {
                                let len = ox1 - ox0;
                                acc += xrow[ix0..ix0 + len]
                                    .iter()
                                    .zip(&grow[ox0..ox1])
                                    .map(|(a, b)| a * b)
                                    .sum::<f64>();
                            } else {
                                for (j, gv) in grow[ox0..ox1].iter().enumerate() {
                                    acc += xrow[ix0 + j * s] * gv;
                                }
                            }
                        }
                        out[((oi * c + ci) * k + ky) * k + kx] += acc;
                    }
                }
            }
        }
    }
    Ok(Array::from_parts(vec![o, c, k, k], out))
}

fn dims2(a: &Array, what: &'static str) -> Result<[usize; 2]> {
    match *a.shape() {
        [r, c] => Ok([r, c]),
        _ => Err(Error::invalid(format!("{what} must be 2-D, got {:?}", a.shape()))),
    }
}

pub(crate) fn matmul(a: &Array, b: &Array) -> Result<Array> {
    let [m, k] = dims2(a, "matmul lhs")?;
    let [k2, n] = dims2(b, "matmul rhs")?;
    if k != k2 {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..][..n];
        for (kk, &av) in ad[i * k..][..k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (dst, bv) in orow.iter_mut().zip(&bd[kk * n..][..n]) {
                *dst += av * bv;
            }
        }
    }
    Ok(Array::from_parts(vec![m, n], out))
}

pub(crate) fn transpose(a: &Array) -> Result<Array> {
    let [r, c] = dims2(a, "transpose")?;
    let d = a.data();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = d[i * c + j];
        }
    }
    Ok(Array::from_parts(vec![c, r], out))
}

/// Flat input index of each max-pool window's maximum (first occurrence in
/// row-major scan on ties), with the pooled shape.
pub(crate) fn maxpool_indices(x: &Array, k: usize, s: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let [n, c, h, w] = dims4(x, "maxpool2d input")?;
    if k == 0 || s == 0 {
        return Err(Error::invalid("maxpool2d window and stride must be positive"));
    }
    if k > h || k > w {
        return Err(Error::invalid(format!(
            "pooling window {k} exceeds spatial extent {h}x{w}"
        )));
    }
    let (oh, ow) = ((h - k) / s + 1, (w - k) / s + 1);
    let d = x.data();
    let mut idx = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * s * w + ox * s;
                let mut best_v = d[best];
                for ky in 0..k {
                    for kx in 0..k {
                        let i = base + (oy * s + ky) * w + ox * s + kx;
                        if d[i] > best_v {
                            best_v = d[i];
                            best = i;
                        }
                    }
                }
                idx.push(best);
            }
        }
    }
    Ok((idx, vec![n, c, oh, ow]))
}

pub(crate) fn gather(x: &Array, index: &[usize], out_shape: &[usize]) -> Result<Array> {
    let d = x.data();
    if index.iter().any(|&i| i >= d.len()) || out_shape.iter().product::<usize>() != index.len() {
        return Err(Error::invalid("gather index out of range"));
    }
    Ok(Array::from_parts(
        out_shape.to_vec(),
        index.iter().map(|&i| d[i]).collect(),
    ))
}

pub(crate) fn scatter_add(g: &Array, index: &[usize], out_shape: &[usize]) -> Result<Array> {
    let n: usize = out_shape.iter().product();
    if g.numel() != index.len() || index.iter().any(|&i| i >= n) {
        return Err(Error::invalid("scatter index out of range"));
    }
    let mut out = vec![0.0; n];
    for (&i, &v) in index.iter().zip(g.data()) {
        out[i] += v;
    }
    Ok(Array::from_parts(out_shape.to_vec(), out))
}
