//! Latent response analysis for variational autoencoders.
//!
//! The central object is the *latent response function* `h(z) = encode(decode(z))`
//! (the encoder mean of a decoded latent vector). Everything else is built on it:
//!
//! - [`response`]: the response field `u(z) = h(z) - z`, response matrices under
//!   interventions, conditioned response matrices against labeled factors, the
//!   causal disentanglement score (CDS), a first-order expansion diagnostic, and a
//!   lasso responsibility baseline.
//! - [`geometry`]: dense 2-D slice evaluation of the field, divergence and mean
//!   curvature maps, CSV/PGM export.
//! - [`interp`]: straight-line and curvature-guided latent interpolation with
//!   ambient-space path metrics.
//! - [`vae`]: a small MLP encoder/decoder pair, the β-weighted ELBO with exact
//!   reverse-mode gradients, Adam training, and a JSON checkpoint format.
//! - [`data`]: synthetic datasets (double helix in R³, enumerable factor grids),
//!   conditional factor sampling, and CSV I/O.
//! - [`nn`]: the from-scratch numerical layer (matrices, dense layers, reverse-mode
//!   backprop, Adam, numerical Jacobians).
//!
//! Determinism is a design constraint throughout: every stochastic operation takes
//! an explicit seed, Monte-Carlo draws are counter-indexed so results do not depend
//! on evaluation order or batching, and all exports format floats with shortest
//! round-trip precision. Same seed, same bytes.

pub mod data;
mod error;
pub mod geometry;
pub mod interp;
pub mod nn;
pub mod response;
pub mod rng;
pub mod stats;
pub mod vae;

pub use error::{Error, Result};
