use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::params::Parameters;
use crate::autodiff::Array;
use crate::error::{Error, Result};

/// Linear-by-default polynomial decay: `lr0 * (1 - step/total)^power`.
pub fn poly_decay(lr0: f64, step: usize, total_steps: usize, power: f64) -> f64 {
    if total_steps == 0 {
        return lr0;
    }
    let frac = (step.min(total_steps) as f64) / total_steps as f64;
    lr0 * (1.0 - frac).powf(power)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One bias-corrected Adam update of every parameter that has a gradient.
///
/// Non-finite gradients abort the step before anything is modified.
pub fn adam_step(
    params: &mut Parameters,
    grads: &BTreeMap<String, Array>,
    state: &mut AdamState,
    lr: f64,
    cfg: AdamConfig,
) -> Result<()> {
    for (name, g) in grads {
        let p = params
            .get(name)
            .ok_or_else(|| Error::invalid(format!("gradient for unknown parameter {name}")))?;
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        if let Some(i) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of {name} at index {i} ({}); step aborted",
                g.data()[i]
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (name, g) in grads {
        let p = params.get(name).expect("checked above");
        let m = state.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.numel()]);
        let v = state.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.numel()]);
        let mut out = p.to_vec();
        for (((theta, &gi), mi), vi) in out.iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *theta -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        params.set(name, Array::new(p.shape().to_vec(), out)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_decay_endpoints() {
        assert_eq!(poly_decay(5e-5, 0, 100, 1.0), 5e-5);
        assert_eq!(poly_decay(5e-5, 100, 100, 1.0), 0.0);
        assert!((poly_decay(5e-5, 50, 100, 1.0) - 2.5e-5).abs() < 1e-20);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m1 = 0.1, v1 = 0.001; m̂ = 1, v̂ = 1 → Δ = -lr / (1 + 1e-8)
        let mut p = Parameters::new([("w".to_string(), Array::zeros(vec![3]))].into());
        let grads = [("w".to_string(), Array::full(vec![3], 1.0))].into();
        let mut st = AdamState::new();
        adam_step(&mut p, &grads, &mut st, 0.1, AdamConfig::default()).unwrap();
        for &v in p.get("w").unwrap().data() {
            assert!((v - (-0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = Parameters::new([("w".to_string(), Array::zeros(vec![2]))].into());
        let grads = [("w".to_string(), Array::from_vec(vec![1.0, f64::NAN]))].into();
        let mut st = AdamState::new();
        assert!(adam_step(&mut p, &grads, &mut st, 0.1, AdamConfig::default()).is_err());
        assert_eq!(st.step, 0);
        assert_eq!(p.get("w").unwrap().data(), &[0.0, 0.0]);
    }
}
