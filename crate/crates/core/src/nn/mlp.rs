//! Fully-connected networks with reverse-mode gradients.
//!
//! A forward pass can record a [`Tape`] (per-layer inputs and pre-activations);
//! [`Mlp::backward`] replays the tape to produce exact parameter gradients and
//! the gradient with respect to the input. Parameters flatten to a canonical
//! `Vec<f64>` (layer 0 weights row-major, layer 0 biases, layer 1 weights, ...)
//! shared by [`Gradients::flatten`], so optimizer state lines up by index.

use rand::Rng;

use super::{Activation, Matrix};
use crate::{Error, Result};

/// One dense layer: `y = act(W x + b)` with `W` of shape `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weight: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    /// Builds a layer from explicit parameters. Errors if `bias` length does
    /// not match the weight row count.
    pub fn new(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::shape(format!(
                "bias has {} entries, weight has {} rows",
                bias.len(),
                weight.rows()
            )));
        }
        Ok(DenseLayer { weight, bias, activation })
    }

    /// Xavier/Glorot-uniform initialization: weights from
    /// `U(-a, a)` with `a = sqrt(6 / (in_dim + out_dim))`, biases zero.
    pub fn xavier<R: Rng>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        assert!(in_dim > 0 && out_dim > 0, "layer dimensions must be positive");
        let a = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut weight = Matrix::zeros(out_dim, in_dim);
        for w in weight.data_mut() {
            *w = rng.gen_range(-a..a);
        }
        DenseLayer { weight, bias: vec![0.0; out_dim], activation }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut Matrix {
        &mut self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Pre-activation `W x + b`.
    ///
    /// # Panics
    /// If `x.len() != self.in_dim()`.
    fn preactivation(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.weight.matvec(x);
        for (zi, bi) in z.iter_mut().zip(&self.bias) {
            *zi += bi;
        }
        z
    }

    /// Applies the layer.
    ///
    /// # Panics
    /// If `x.len() != self.in_dim()`.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.preactivation(x);
        for zi in z.iter_mut() {
            *zi = self.activation.apply(*zi);
        }
        z
    }
}

/// Per-layer records from a forward pass: the layer input and the
/// pre-activation `W x + b`, both needed by the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Vec<f64>>,
    preacts: Vec<Vec<f64>>,
}

/// Gradient of a scalar loss with respect to one layer's parameters.
#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Gradients for every layer of an [`Mlp`], in network order.
#[derive(Debug, Clone)]
pub struct Gradients {
    layers: Vec<LayerGrad>,
}

impl Gradients {
    /// Zero gradients shaped like `net`.
    pub fn zeros_like(net: &Mlp) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| LayerGrad {
                weight: Matrix::zeros(l.out_dim(), l.in_dim()),
                bias: vec![0.0; l.out_dim()],
            })
            .collect();
        Gradients { layers }
    }

    pub fn layers(&self) -> &[LayerGrad] {
        &self.layers
    }

    /// `self += other`, layer by layer.
    ///
    /// # Panics
    /// If the two gradient sets have different shapes.
    pub fn add_assign(&mut self, other: &Gradients) {
        assert_eq!(self.layers.len(), other.layers.len(), "gradient layer count mismatch");
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    /// Multiplies every gradient entry by `s`.
    pub fn scale(&mut self, s: f64) {
        for l in self.layers.iter_mut() {
            for x in l.weight.data_mut() {
                *x *= s;
            }
            for x in l.bias.iter_mut() {
                *x *= s;
            }
        }
    }

    /// Flattens into the canonical parameter order of [`Mlp::flatten_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }
}

/// A multi-layer perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
}

impl Mlp {
    /// A Xavier-initialized network with the given layer sizes
    /// (`sizes[0]` inputs, `sizes.last()` outputs). Hidden layers use
    /// `hidden`, the final layer uses `output`.
    ///
    /// # Panics
    /// If fewer than two sizes are given or any size is zero.
    pub fn new<R: Rng>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for i in 0..sizes.len() - 1 {
            let act = if i + 2 == sizes.len() { output } else { hidden };
            layers.push(DenseLayer::xavier(sizes[i], sizes[i + 1], act, rng));
        }
        Mlp { layers }
    }

    /// Builds a network from explicit layers. Errors if consecutive layer
    /// dimensions do not chain.
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network must have at least one layer"));
        }
        for i in 1..layers.len() {
            if layers[i].in_dim() != layers[i - 1].out_dim() {
                return Err(Error::shape(format!(
                    "layer {i} expects {} inputs but layer {} produces {}",
                    layers[i].in_dim(),
                    i - 1,
                    layers[i - 1].out_dim()
                )));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    /// Evaluates the network.
    ///
    /// # Panics
    /// If `x.len() != self.in_dim()`.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.in_dim(), "input has {} entries, network expects {}", x.len(), self.in_dim());
        let mut a = x.to_vec();
        for layer in &self.layers {
            a = layer.forward(&a);
        }
        a
    }

    /// Evaluates the network and records a [`Tape`] for [`Mlp::backward`].
    ///
    /// # Panics
    /// If `x.len() != self.in_dim()`.
    pub fn forward_tape(&self, x: &[f64]) -> (Vec<f64>, Tape) {
        assert_eq!(x.len(), self.in_dim(), "input has {} entries, network expects {}", x.len(), self.in_dim());
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for layer in &self.layers {
            inputs.push(a.clone());
            let z = layer.preactivation(&a);
            a = z.iter().map(|&zi| layer.activation.apply(zi)).collect();
            preacts.push(z);
        }
        (a, Tape { inputs, preacts })
    }

    /// Reverse-mode pass. `out_grad` is the loss gradient with respect to the
    /// network output; returns parameter gradients and the loss gradient with
    /// respect to the network input.
    ///
    /// # Panics
    /// If the tape was not produced by a network of this shape or `out_grad`
    /// has the wrong length.
    pub fn backward(&self, tape: &Tape, out_grad: &[f64]) -> (Gradients, Vec<f64>) {
        assert_eq!(tape.inputs.len(), self.layers.len(), "tape does not match network depth");
        assert_eq!(out_grad.len(), self.out_dim(), "out_grad has {} entries, network produces {}", out_grad.len(), self.out_dim());
        let mut grads = Gradients::zeros_like(self);
        let mut g = out_grad.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let z = &tape.preacts[idx];
            let a_in = &tape.inputs[idx];
            assert_eq!(a_in.len(), layer.in_dim(), "tape does not match layer {idx} input size");
            // dL/dz = dL/da * act'(z)
            let dz: Vec<f64> = g
                .iter()
                .zip(z)
                .map(|(gi, &zi)| gi * layer.activation.derivative(zi))
                .collect();
            grads.layers[idx].weight.add_outer(&dz, a_in, 1.0);
            for (b, d) in grads.layers[idx].bias.iter_mut().zip(&dz) {
                *b += d;
            }
            g = layer.weight.matvec_t(&dz);
        }
        (grads, g)
    }

    /// Total number of scalar parameters.
    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.out_dim() * l.in_dim() + l.out_dim())
            .sum()
    }

    /// Canonical flat parameter vector (layer 0 weights row-major, layer 0
    /// biases, layer 1 weights, ...).
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Writes a flat parameter vector back into the network. Errors if the
    /// length does not match [`Mlp::num_params`].
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::shape(format!(
                "parameter vector has {} entries, network has {}",
                params.len(),
                self.num_params()
            )));
        }
        let mut off = 0;
        for l in self.layers.iter_mut() {
            let nw = l.weight.rows() * l.weight.cols();
            l.weight.data_mut().copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        Ok(())
    }
}
