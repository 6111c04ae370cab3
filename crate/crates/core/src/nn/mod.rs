//! From-scratch neural-network core: dense layers, reverse-mode gradients,
//! Adam, and numerical Jacobians.
//!
//! Scope is deliberately small — fully-connected MLPs in f64 with ELU, identity
//! or sigmoid activations — but gradients are exact (verified against central
//! finite differences) and every stochastic choice is seed-deterministic.

mod adam;
mod jacobian;
mod matrix;
mod mlp;

pub use adam::{adam_step, AdamState};
pub use jacobian::numerical_jacobian;
pub use matrix::Matrix;
pub use mlp::{DenseLayer, Gradients, LayerGrad, Mlp, Tape};

use serde::{Deserialize, Serialize};

/// Exponential linear unit: `x` for `x > 0`, `exp(x) - 1` otherwise.
/// Continuously differentiable at 0 (both one-sided derivatives equal 1).
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

/// Derivative of [`elu`] as a function of the pre-activation.
pub fn elu_prime(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Numerically stable logistic sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Elu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Elu => elu(x),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative with respect to the pre-activation `x`.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Elu => elu_prime(x),
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Elu => "elu",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn elu_matches_closed_form() {
        assert_eq!(elu(2.5), 2.5);
        assert_eq!(elu(0.0), 0.0);
        assert_relative_eq!(elu(-1.0), (-1.0f64).exp() - 1.0, max_relative = 1e-15);
        assert_relative_eq!(elu(-5.0), (-5.0f64).exp() - 1.0, max_relative = 1e-15);
    }

    #[test]
    fn elu_is_c1_at_zero() {
        // One-sided difference quotients at 0 agree to 1e-6.
        let h = 1e-7;
        let right = (elu(h) - elu(0.0)) / h;
        let left = (elu(0.0) - elu(-h)) / h;
        assert!((right - left).abs() < 1e-6, "left {left}, right {right}");
        assert_eq!(elu_prime(0.0), 1.0);
    }

    #[test]
    fn elu_prime_matches_finite_differences() {
        let h = 1e-6;
        for &x in &[-3.0, -0.7, -0.1, 0.2, 1.9] {
            let fd = (elu(x + h) - elu(x - h)) / (2.0 * h);
            assert_relative_eq!(elu_prime(x), fd, max_relative = 1e-8);
        }
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_relative_eq!(sigmoid(0.0), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn sigmoid_derivative_matches_finite_differences() {
        let h = 1e-6;
        for &x in &[-4.0, -1.0, 0.0, 0.5, 3.0] {
            let fd = (sigmoid(x + h) - sigmoid(x - h)) / (2.0 * h);
            assert_relative_eq!(Activation::Sigmoid.derivative(x), fd, max_relative = 1e-6);
        }
    }
}
