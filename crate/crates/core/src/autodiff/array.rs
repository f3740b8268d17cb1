use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Dense row-major array of `f64` values.
///
/// Storage is reference counted and immutable, so clones are cheap and an
/// `Array` can be shared read-only across threads.
#[derive(Clone, PartialEq)]
pub struct Array {
    shape: Vec<usize>,
    data: Arc<[f64]>,
}

impl Array {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::invalid(format!(
                "shape {:?} holds {} values, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Array {
            shape,
            data: data.into(),
        })
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Array {
            shape,
            data: data.into(),
        }
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f64) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Array::from_parts(shape, vec![value; n])
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Array::full(shape, 0.0)
    }

    pub fn scalar(value: f64) -> Self {
        Array::from_parts(vec![1], vec![value])
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Array::from_parts(vec![data.len()], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.to_vec()
    }

    /// The single value of a one-element array.
    pub fn item(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(Error::invalid(format!(
                "item() on array of shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != self.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape,
            });
        }
        Ok(Array {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Array::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Array) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0`.
    pub fn bit_eq(&self, other: &Array) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl fmt::Debug for Array {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const MAX: usize = 16;
        write!(f, "Array{:?}", self.shape)?;
        if self.numel() <= MAX {
            write!(f, "{:?}", &self.data[..])
        } else {
            write!(f, "{:?}...", &self.data[..MAX])
        }
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Trailing-dimension broadcast of two shapes.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `shape` viewed inside the broadcast shape `out`, with zero
/// stride on broadcast axes.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let own = strides(shape);
    let offset = out.len() - shape.len();
    (0..out.len())
        .map(|i| {
            if i < offset || shape[i - offset] == 1 {
                0
            } else {
                own[i - offset]
            }
        })
        .collect()
}

pub(crate) fn broadcast_binary(
    op: &'static str,
    a: &Array,
    b: &Array,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Array> {
    if a.shape == b.shape {
        let data = a.data.iter().zip(b.data.iter()).map(|(&x, &y)| f(x, y)).collect();
        return Ok(Array::from_parts(a.shape.clone(), data));
    }
    let out = broadcast_shape(&a.shape, &b.shape).ok_or_else(|| Error::ShapeMismatch {
        op,
        lhs: a.shape.clone(),
        rhs: b.shape.clone(),
    })?;
    if b.numel() == 1 && out == a.shape {
        let y = b.data[0];
        return Ok(a.map(|x| f(x, y)));
    }
    if a.numel() == 1 && out == b.shape {
        let x = a.data[0];
        return Ok(b.map(|y| f(x, y)));
    }
    let sa = broadcast_strides(&a.shape, &out);
    let sb = broadcast_strides(&b.shape, &out);
    let n: usize = out.iter().product();
    let mut data = Vec::with_capacity(n);
    let mut idx = vec![0usize; out.len()];
    let (mut ia, mut ib) = (0usize, 0usize);
    for _ in 0..n {
        data.push(f(a.data[ia], b.data[ib]));
        for d in (0..out.len()).rev() {
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out[d] {
                break;
            }
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
    Ok(Array::from_parts(out, data))
}

/// Sums over `axes`, keeping them as size-1 dimensions.
pub(crate) fn sum_keepdim(x: &Array, axes: &[usize]) -> Result<Array> {
    let rank = x.rank();
    if let Some(&bad) = axes.iter().find(|&&a| a >= rank) {
        return Err(Error::invalid(format!(
            "reduction axis {bad} out of range for rank {rank}"
        )));
    }
    let mut out_shape = x.shape.clone();
    for &a in axes {
        out_shape[a] = 1;
    }
    let out_strides = broadcast_strides(&out_shape, &x.shape);
    let mut out = vec![0.0; out_shape.iter().product()];
    let mut idx = vec![0usize; rank];
    let mut io = 0usize;
    for &v in x.data.iter() {
        out[io] += v;
        for d in (0..rank).rev() {
            idx[d] += 1;
            io += out_strides[d];
            if idx[d] < x.shape[d] {
                break;
            }
            io -= out_strides[d] * x.shape[d];
            idx[d] = 0;
        }
    }
    Ok(Array::from_parts(out_shape, out))
}

pub(crate) fn broadcast_to(x: &Array, shape: &[usize]) -> Result<Array> {
    match broadcast_shape(&x.shape, shape) {
        Some(s) if s == shape => {}
        _ => {
            return Err(Error::ShapeMismatch {
                op: "broadcast_to",
                lhs: x.shape.clone(),
                rhs: shape.to_vec(),
            })
        }
    }
    let zeros = Array::zeros(shape.to_vec());
    broadcast_binary("broadcast_to", &zeros, x, |_, v| v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_rules() {
        assert_eq!(broadcast_shape(&[2, 3], &[3]), Some(vec![2, 3]));
        assert_eq!(broadcast_shape(&[2, 1, 4], &[3, 1]), Some(vec![2, 3, 4]));
        assert_eq!(broadcast_shape(&[2, 3], &[2]), None);
    }

    #[test]
    fn general_broadcast_matches_manual() {
        let a = Array::new(vec![2, 1], vec![1.0, 2.0]).unwrap();
        let b = Array::new(vec![1, 3], vec![10.0, 20.0, 30.0]).unwrap();
        let c = broadcast_binary("add", &a, &b, |x, y| x + y).unwrap();
        assert_eq!(c.shape(), &[2, 3]);
        assert_eq!(c.data(), &[11.0, 21.0, 31.0, 12.0, 22.0, 32.0]);
    }

    #[test]
    fn sum_keepdim_axes() {
        let a = Array::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(sum_keepdim(&a, &[0]).unwrap().data(), &[5.0, 7.0, 9.0]);
        assert_eq!(sum_keepdim(&a, &[1]).unwrap().data(), &[6.0, 15.0]);
        assert_eq!(sum_keepdim(&a, &[0, 1]).unwrap().data(), &[21.0]);
        assert_eq!(broadcast_to(&sum_keepdim(&a, &[1]).unwrap(), &[2, 3]).unwrap().data(),
            &[6.0, 6.0, 6.0, 15.0, 15.0, 15.0]);
    }

    #[test]
    fn new_rejects_bad_length() {
        assert!(Array::new(vec![2, 2], vec![1.0]).is_err());
    }
}
