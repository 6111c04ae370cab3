//! `gen-data`: synthetic dataset generation.
//!
//! Two generators: `helix` samples the noisy double helix in R^3 (labels:
//! curve parameter and strand), `factors` enumerates a labeled factor grid
//! pushed through a fixed random embedding. Both write `dataset.csv` plus a
//! rerunnable `manifest.toml` into the output directory.

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use latent_response::data::{self, FactorConfig, HelixConfig};
use latent_response::rng;

use crate::config::{require, write_manifest};
use crate::error::Result;

/// Flags for `gen-data helix`. Defaults mirror [`HelixConfig::default`].
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct HelixArgs {
    /// Number of samples.
    #[arg(long)]
    pub n: Option<usize>,
    /// Amplitude of the cosine coordinate.
    #[arg(long)]
    pub a1: Option<f64>,
    /// Amplitude of the sine coordinate.
    #[arg(long)]
    pub a2: Option<f64>,
    /// Slope of the height coordinate.
    #[arg(long)]
    pub a3: Option<f64>,
    /// Winding frequency.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Observation noise standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Master seed; the curve parameters, strand flips, and noise use named
    /// sub-streams.
    #[arg(long)]
    pub seed: Option<u32>,
    /// Output directory (receives dataset.csv and manifest.toml).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Flags for `gen-data factors`.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FactorsArgs {
    /// Comma-separated per-factor level counts, e.g. `4,4,4`.
    #[arg(long, value_delimiter = ',')]
    pub cardinalities: Option<Vec<usize>>,
    /// Observation dimension.
    #[arg(long)]
    pub obs_dim: Option<usize>,
    /// Observation noise standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Master seed; the embedding map and the noise use named sub-streams.
    #[arg(long)]
    pub seed: Option<u32>,
    /// Output directory (receives dataset.csv and manifest.toml).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// The two dataset generators, as a clap subcommand.
#[derive(clap::Subcommand, Debug)]
pub enum GenDataCmd {
    /// Sample the noisy double helix in R^3 (labels: t and strand).
    Helix(HelixArgs),
    /// Enumerate a labeled factor grid embedded in R^D.
    Factors(FactorsArgs),
}

/// The `[gen-data]` config section: one sub-table per generator, e.g.
/// `[gen-data.helix]`.
#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenDataSection {
    Helix(HelixArgs),
    Factors(FactorsArgs),
}

/// Resolved parameters, recorded in the manifest.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum GenDataParams {
    Helix(HelixParams),
    Factors(FactorsParams),
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct HelixParams {
    n: usize,
    a1: f64,
    a2: f64,
    a3: f64,
    omega: f64,
    sigma: f64,
    seed: u32,
    out: PathBuf,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct FactorsParams {
    cardinalities: Vec<usize>,
    obs_dim: usize,
    sigma: f64,
    seed: u32,
    out: PathBuf,
}

/// Dispatches an explicit `gen-data` subcommand; the config section is only
/// consulted when it describes the same generator.
pub fn run(cmd: GenDataCmd, section: Option<GenDataSection>) -> Result<()> {
    match cmd {
        GenDataCmd::Helix(args) => {
            let file = match section {
                Some(GenDataSection::Helix(f)) => Some(f),
                _ => None,
            };
            run_helix(args, file)
        }
        GenDataCmd::Factors(args) => {
            let file = match section {
                Some(GenDataSection::Factors(f)) => Some(f),
                _ => None,
            };
            run_factors(args, file)
        }
    }
}

/// Reruns `gen-data` purely from a config/manifest section.
pub fn run_from_config(section: GenDataSection) -> Result<()> {
    match section {
        GenDataSection::Helix(f) => run_helix(HelixArgs::default(), Some(f)),
        GenDataSection::Factors(f) => run_factors(FactorsArgs::default(), Some(f)),
    }
}

fn run_helix(args: HelixArgs, file: Option<HelixArgs>) -> Result<()> {
    let f = file.unwrap_or_default();
    let d = HelixConfig::default();
    let params = HelixParams {
        n: args.n.or(f.n).unwrap_or(d.n),
        a1: args.a1.or(f.a1).unwrap_or(d.a1),
        a2: args.a2.or(f.a2).unwrap_or(d.a2),
        a3: args.a3.or(f.a3).unwrap_or(d.a3),
        omega: args.omega.or(f.omega).unwrap_or(d.omega),
        sigma: args.sigma.or(f.sigma).unwrap_or(d.sigma),
        seed: args.seed.or(f.seed).unwrap_or(0),
        out: require(args.out.or(f.out), "out")?,
    };
    let config = HelixConfig {
        n: params.n,
        a1: params.a1,
        a2: params.a2,
        a3: params.a3,
        omega: params.omega,
        sigma: params.sigma,
        seed: params.seed as u64,
    };
    let dataset = data::gen_helix(&config)?;
    write_manifest(&params.out, "gen-data", &GenDataParams::Helix(params.clone()))?;
    let path = params.out.join("dataset.csv");
    data::write_csv(&dataset, &path)?;
    println!(
        "helix: {} rows, sigma {}, seed {} -> {}",
        dataset.len(),
        params.sigma,
        params.seed,
        path.display()
    );
    Ok(())
}

fn run_factors(args: FactorsArgs, file: Option<FactorsArgs>) -> Result<()> {
    let f = file.unwrap_or_default();
    let params = FactorsParams {
        cardinalities: args.cardinalities.or(f.cardinalities).unwrap_or_else(|| vec![4, 4, 4]),
        obs_dim: args.obs_dim.or(f.obs_dim).unwrap_or(8),
        sigma: args.sigma.or(f.sigma).unwrap_or(0.05),
        seed: args.seed.or(f.seed).unwrap_or(0),
        out: require(args.out.or(f.out), "out")?,
    };
    let seed = params.seed as u64;
    let config = FactorConfig {
        cardinalities: params.cardinalities.clone(),
        obs_dim: params.obs_dim,
        sigma: params.sigma,
        embed_seed: rng::sub_seed(seed, "embed"),
        noise_seed: rng::sub_seed(seed, "noise"),
    };
    let dataset = data::gen_factors(&config)?;
    write_manifest(&params.out, "gen-data", &GenDataParams::Factors(params.clone()))?;
    let path = params.out.join("dataset.csv");
    data::write_csv(&dataset, &path)?;
    println!(
        "factors: {} rows ({} factors, obs dim {}) -> {}",
        dataset.len(),
        params.cardinalities.len(),
        params.obs_dim,
        path.display()
    );
    Ok(())
}
