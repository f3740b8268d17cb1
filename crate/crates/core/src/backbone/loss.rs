use crate::autodiff::{Array, Tensor};
use crate::error::{Error, Result};

/// Mean over the batch of `-log softmax(logits)[label]`.
///
/// The per-row maximum is subtracted as a constant; log-softmax is
/// invariant to that shift, so derivatives of every order are unaffected.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (n, k) = match *logits.shape() {
        [n, k] => (n, k),
        _ => return Err(Error::invalid(format!("logits must be N×K, got {:?}", logits.shape()))),
    };
    if labels.len() != n {
        return Err(Error::invalid(format!("{} labels for a batch of {n}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::invalid(format!("label {bad} out of range for {k} classes")));
    }
    let row_max: Vec<f64> = logits
        .data()
        .chunks(k)
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let shifted = logits.sub(&Tensor::constant(Array::new(vec![n, 1], row_max)?))?;
    let log_norm = shifted.exp()?.sum_axes(&[1])?.ln()?;
    let log_probs = shifted.sub(&log_norm)?;
    let mut onehot = vec![0.0; n * k];
    for (i, &l) in labels.iter().enumerate() {
        onehot[i * k + l] = 1.0;
    }
    let picked = log_probs.mul(&Tensor::constant(Array::new(vec![n, k], onehot)?))?;
    Ok(picked.sum_all()?.scale(-1.0 / n as f64))
}
