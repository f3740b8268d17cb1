use super::array::Array;
use crate::error::{Error, Result};

/// Central-difference gradient of a scalar function:
/// `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)` for every coordinate.
pub fn finite_diff<F>(mut f: F, x: &Array, eps: f64) -> Result<Array>
where
    F: FnMut(&Array) -> Result<f64>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("finite_diff step must be positive, got {eps}")));
    }
    let mut buf = x.to_vec();
    let mut out = Vec::with_capacity(buf.len());
    for i in 0..buf.len() {
        let orig = buf[i];
        buf[i] = orig + eps;
        let plus = f(&Array::from_parts(x.shape().to_vec(), buf.clone()))?;
        buf[i] = orig - eps;
        let minus = f(&Array::from_parts(x.shape().to_vec(), buf.clone()))?;
        buf[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("finite_diff evaluation at coordinate {i}")));
        }
        out.push((plus - minus) / (2.0 * eps));
    }
    Ok(Array::from_parts(x.shape().to_vec(), out))
}

/// `|a - b| / max(|a|, |b|)`, zero when both are zero.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
