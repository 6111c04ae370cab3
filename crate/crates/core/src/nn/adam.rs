//! Adam optimizer on flat parameter vectors.

use crate::{Error, Result};

/// Adam state: first/second moment estimates plus the step counter.
///
/// Hyperparameters follow the common defaults (`beta1 = 0.9`, `beta2 = 0.999`,
/// `eps = 1e-8`); `eps` sits outside the square root, so the very first step
/// with gradient `g` is exactly `-lr * g / (|g| + eps)`.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Completed steps.
    pub t: u64,
    /// First-moment estimate, one entry per parameter.
    pub m: Vec<f64>,
    /// Second-moment estimate, one entry per parameter.
    pub v: Vec<f64>,
}

impl AdamState {
    /// Fresh state for `n` parameters.
    pub fn new(lr: f64, n: usize) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One Adam update with bias correction, in place.
///
/// Errors if shapes disagree or any gradient entry is non-finite (the state is
/// left untouched in both cases).
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::shape(format!(
            "adam: {} params, {} grads, state for {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(k) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::non_finite(format!("gradient entry {k} is {}", grads[k])));
    }
    // A finite but enormous gradient overflows the second moment to infinity,
    // after which updates silently collapse to zero; treat it as divergence
    // before touching any state.
    for (k, (&g, &v)) in grads.iter().zip(&state.v).enumerate() {
        if !(state.beta2 * v + (1.0 - state.beta2) * g * g).is_finite() {
            return Err(Error::non_finite(format!(
                "second-moment update overflowed for entry {k} (gradient {g})"
            )));
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}
