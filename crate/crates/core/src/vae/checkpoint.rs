//! JSON checkpoints.
//!
//! Weights are stored as nested decimal arrays (row-major per layer) with
//! shortest round-trip float formatting, so save -> load -> save is
//! byte-identical and load -> save of a model reproduces its parameters
//! bit for bit. Metadata (dimensions, beta, seed, activations, normalization)
//! travels with the weights and is validated on load.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::VaeModel;
use crate::nn::{Activation, DenseLayer, Matrix, Mlp};
use crate::{Error, Result};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    latent_dim: usize,
    obs_dim: usize,
    beta: f64,
    seed: u64,
    normalization: NormBlock,
    encoder: NetBlock,
    decoder: NetBlock,
}

#[derive(Debug, Serialize, Deserialize)]
struct NormBlock {
    mean: Vec<f64>,
    std: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NetBlock {
    layers: Vec<LayerBlock>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerBlock {
    activation: Activation,
    /// `out_dim` rows of `in_dim` values.
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

fn net_block(net: &Mlp) -> NetBlock {
    NetBlock {
        layers: net
            .layers()
            .iter()
            .map(|l| LayerBlock {
                activation: l.activation(),
                weight: (0..l.out_dim()).map(|i| l.weight().row(i).to_vec()).collect(),
                bias: l.bias().to_vec(),
            })
            .collect(),
    }
}

fn build_net(block: NetBlock, what: &str) -> Result<Mlp> {
    let mut layers = Vec::with_capacity(block.layers.len());
    for (i, lb) in block.layers.into_iter().enumerate() {
        let weight = Matrix::from_rows(&lb.weight)
            .map_err(|e| Error::invalid(format!("{what} layer {i}: {e}")))?;
        if !weight.is_finite() || lb.bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite(format!("{what} layer {i} contains non-finite parameters")));
        }
        let layer = DenseLayer::new(weight, lb.bias, lb.activation)
            .map_err(|e| Error::invalid(format!("{what} layer {i}: {e}")))?;
        layers.push(layer);
    }
    Mlp::from_layers(layers).map_err(|e| Error::invalid(format!("{what}: {e}")))
}

/// Serializes `model` to pretty-printed JSON at `path`.
pub fn save_checkpoint(model: &VaeModel, path: &Path) -> Result<()> {
    let file = CheckpointFile {
        format_version: FORMAT_VERSION,
        latent_dim: model.latent_dim(),
        obs_dim: model.obs_dim(),
        beta: model.beta(),
        seed: model.seed(),
        normalization: NormBlock {
            mean: model.obs_mean().to_vec(),
            std: model.obs_std().to_vec(),
        },
        encoder: net_block(model.encoder()),
        decoder: net_block(model.decoder()),
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, &file)?;
    use std::io::Write;
    writeln!(out)?;
    Ok(())
}

/// Loads a checkpoint, validating version, dimension chaining, metadata
/// consistency, and finiteness of every parameter.
pub fn load_checkpoint(path: &Path) -> Result<VaeModel> {
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let file: CheckpointFile = serde_json::from_reader(reader)?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::invalid(format!(
            "unsupported checkpoint format_version {} (this build reads {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let encoder = build_net(file.encoder, "encoder")?;
    let decoder = build_net(file.decoder, "decoder")?;
    if decoder.in_dim() != file.latent_dim {
        return Err(Error::shape(format!(
            "metadata says latent_dim {} but decoder consumes {}",
            file.latent_dim,
            decoder.in_dim()
        )));
    }
    if decoder.out_dim() != file.obs_dim {
        return Err(Error::shape(format!(
            "metadata says obs_dim {} but decoder produces {}",
            file.obs_dim,
            decoder.out_dim()
        )));
    }
    let mut model = VaeModel::from_parts(encoder, decoder, file.beta)?;
    model.set_seed(file.seed);
    model.set_normalization(file.normalization.mean, file.normalization.std)?;
    Ok(model)
}
