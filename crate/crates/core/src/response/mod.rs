//! The latent response function and its diagnostics.
//!
//! For a trained VAE, decoding a latent vector and re-encoding the result
//! gives the *response* `h(z) = encode(decode(z)).mean`. Because the encoder
//! only sees decoded (on-manifold) observations, `h` projects latent space
//! toward the region the model actually uses: the displacement
//! `u(z) = h(z) - z` points at the latent manifold and its length measures how
//! far off-manifold `z` sits.
//!
//! This module provides the pointwise operations (response, field,
//! interventions, response-distribution sampling, a first-order expansion
//! diagnostic); [`crate::response`]'s submodules add Monte-Carlo response
//! matrices and scores on top.

mod matrix;
mod responsibility;

pub use matrix::{
    cds, conditioned_response_matrix, response_matrix, CdsScore, ConditionedResponseMatrix,
    InterventionSource, ResponseMatrix,
};
pub use responsibility::{responsibility_matrix, ResponsibilityMatrix};

use serde::Serialize;

use crate::nn::numerical_jacobian;
use crate::rng;
use crate::vae::VaeModel;
use crate::{Error, Result};

/// The latent response `h(z) = encode(decode(z)).mean`.
///
/// # Panics
/// If `z.len() != model.latent_dim()`.
pub fn latent_response(model: &VaeModel, z: &[f64]) -> Vec<f64> {
    model.encode(&model.decode(z)).mean
}

/// The response field `u(z) = h(z) - z`.
///
/// # Panics
/// If `z.len() != model.latent_dim()`.
pub fn response_field(model: &VaeModel, z: &[f64]) -> Vec<f64> {
    let mut u = latent_response(model, z);
    for (ui, zi) in u.iter_mut().zip(z) {
        *ui -= zi;
    }
    u
}

/// Replaces coordinate `dim` of `z` with `value`, leaving every other
/// coordinate bit-identical. Errors on an out-of-range dimension or a
/// non-finite value.
pub fn intervene(z: &[f64], dim: usize, value: f64) -> Result<Vec<f64>> {
    if dim >= z.len() {
        return Err(Error::invalid(format!(
            "intervention dimension {dim} out of range for {}-dimensional latent",
            z.len()
        )));
    }
    if !value.is_finite() {
        return Err(Error::invalid(format!("intervention value must be finite, got {value}")));
    }
    let mut out = z.to_vec();
    out[dim] = value;
    Ok(out)
}

/// How to draw reparameterization noise when sampling the response
/// distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// Full posterior draws `mean + sigma * eps`.
    Posterior,
    /// Deterministic: every draw is the posterior mean.
    MeanOnly,
}

/// Draws from the response distribution at `z`.
#[derive(Debug, Clone)]
pub struct ResponseSamples {
    pub base: Vec<f64>,
    pub draws: Vec<Vec<f64>>,
    /// Per-dimension sample mean of the draws.
    pub mean: Vec<f64>,
    /// Per-dimension unbiased sample variance (0 when `n = 1`).
    pub variance: Vec<f64>,
}

/// Samples the response distribution `r(Ẑ | z)`: decode `z` once (the decoder
/// is deterministic), then draw `n` posterior samples of the decoded
/// observation. Draws are counter-indexed under `seed`, so draw `i` is the
/// same regardless of `n`.
pub fn sample_response_distribution(
    model: &VaeModel,
    z: &[f64],
    n: usize,
    noise_mode: NoiseMode,
    seed: u64,
) -> Result<ResponseSamples> {
    if z.len() != model.latent_dim() {
        return Err(Error::shape(format!(
            "z has {} dims, model latent_dim is {}",
            z.len(),
            model.latent_dim()
        )));
    }
    if n == 0 {
        return Err(Error::invalid("need at least one draw"));
    }
    let decoded = model.decode(z);
    let posterior = model.encode(&decoded);
    let stream = rng::sub_seed(seed, "response-dist");
    let draws: Vec<Vec<f64>> = (0..n)
        .map(|i| match noise_mode {
            NoiseMode::Posterior => {
                model.reparameterize(&posterior, &mut rng::indexed(stream, i as u64))
            }
            NoiseMode::MeanOnly => posterior.mean.clone(),
        })
        .collect();

    let d = model.latent_dim();
    let mut mean = vec![0.0; d];
    for draw in &draws {
        for (m, v) in mean.iter_mut().zip(draw) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut variance = vec![0.0; d];
    if n > 1 {
        for draw in &draws {
            for (j, v) in draw.iter().enumerate() {
                let c = v - mean[j];
                variance[j] += c * c;
            }
        }
        for v in variance.iter_mut() {
            *v /= (n - 1) as f64;
        }
    }
    Ok(ResponseSamples { base: z.to_vec(), draws, mean, variance })
}

/// Pieces of the first-order expansion of the response around an observation.
///
/// With `s = encode(x).mean`, perturbing the latent code by `u` and re-encoding
/// expands as `encode(decode(s + u)).mean ≈ s + J_f (decode(s) - x) + J_f J_g u`,
/// where `J_f` is the encoder-mean Jacobian at `x` and `J_g` the decoder
/// Jacobian at `s`. The remainder is second order in `u` and in the
/// reconstruction error.
#[derive(Debug, Clone, Serialize)]
pub struct ExpansionReport {
    /// Encoder mean at `x`.
    pub s: Vec<f64>,
    /// Actual re-encoded mean `encode(decode(s + u)).mean`.
    pub s_hat: Vec<f64>,
    /// `J_f (decode(s) - x)`: the reconstruction-error term.
    pub recon_term: Vec<f64>,
    /// `J_f J_g u`: the perturbation term.
    pub perturbation_term: Vec<f64>,
    /// `s + recon_term + perturbation_term`.
    pub predicted: Vec<f64>,
    /// `s_hat - predicted`.
    pub residual: Vec<f64>,
    pub residual_norm: f64,
    /// Norm of `decode(s + u) - x` (the ambient perturbation, for scale).
    pub eps_norm: f64,
}

/// Evaluates the first-order expansion of the response at observation `x`
/// with latent perturbation `u`, using central-difference Jacobians with step
/// `fd_step`.
pub fn expansion_diagnostic(
    model: &VaeModel,
    x: &[f64],
    u: &[f64],
    fd_step: f64,
) -> Result<ExpansionReport> {
    if x.len() != model.obs_dim() {
        return Err(Error::shape(format!(
            "x has {} dims, model obs_dim is {}",
            x.len(),
            model.obs_dim()
        )));
    }
    if u.len() != model.latent_dim() {
        return Err(Error::shape(format!(
            "u has {} dims, model latent_dim is {}",
            u.len(),
            model.latent_dim()
        )));
    }

    let s = model.encode(x).mean;
    let decoded_s = model.decode(&s);
    let z_pert: Vec<f64> = s.iter().zip(u).map(|(a, b)| a + b).collect();
    let x_pert = model.decode(&z_pert);
    let s_hat = model.encode(&x_pert).mean;
    let eps_norm = norm(&x_pert.iter().zip(x).map(|(a, b)| a - b).collect::<Vec<_>>());

    let j_f = numerical_jacobian(|xx| model.encode(xx).mean, x, fd_step)?;
    let j_g = numerical_jacobian(|zz| model.decode(zz), &s, fd_step)?;

    let recon_err: Vec<f64> = decoded_s.iter().zip(x).map(|(a, b)| a - b).collect();
    let recon_term = j_f.matvec(&recon_err);
    let perturbation_term = j_f.matvec(&j_g.matvec(u));

    let predicted: Vec<f64> = s
        .iter()
        .zip(&recon_term)
        .zip(&perturbation_term)
        .map(|((a, b), c)| a + b + c)
        .collect();
    let residual: Vec<f64> = s_hat.iter().zip(&predicted).map(|(a, b)| a - b).collect();
    let residual_norm = norm(&residual);

    Ok(ExpansionReport {
        s,
        s_hat,
        recon_term,
        perturbation_term,
        predicted,
        residual,
        residual_norm,
        eps_norm,
    })
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
pub(crate) mod test_models {
    use crate::nn::{Activation, DenseLayer, Matrix, Mlp};
    use crate::vae::VaeModel;

    /// Encoder mean = identity, log-sigma = `log_sigma` (constant), decoder =
    /// identity: `h(z) = z` exactly.
    pub fn identity_model(dim: usize, log_sigma: f64) -> VaeModel {
        let mut enc_w = Matrix::zeros(2 * dim, dim);
        for i in 0..dim {
            enc_w[(i, i)] = 1.0;
        }
        let mut enc_b = vec![0.0; 2 * dim];
        for b in enc_b.iter_mut().skip(dim) {
            *b = log_sigma;
        }
        let enc = Mlp::from_layers(vec![DenseLayer::new(enc_w, enc_b, Activation::Identity).unwrap()]).unwrap();
        let dec = Mlp::from_layers(vec![DenseLayer::new(
            Matrix::identity(dim),
            vec![0.0; dim],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        VaeModel::from_parts(enc, dec, 1.0).unwrap()
    }

    /// Decoder ignores `z` entirely (constant output); encoder mean is a fixed
    /// linear read-out. `h` is constant.
    pub fn constant_decoder_model(latent_dim: usize, obs_dim: usize) -> VaeModel {
        let mut enc_w = Matrix::zeros(2 * latent_dim, obs_dim);
        for i in 0..latent_dim {
            enc_w[(i, i % obs_dim)] = 0.7;
        }
        let enc = Mlp::from_layers(vec![DenseLayer::new(
            enc_w,
            vec![0.0; 2 * latent_dim],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        let dec = Mlp::from_layers(vec![DenseLayer::new(
            Matrix::zeros(obs_dim, latent_dim),
            (0..obs_dim).map(|i| 0.3 * i as f64).collect(),
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        VaeModel::from_parts(enc, dec, 1.0).unwrap()
    }
}
