//! `train` and `sweep`: optimize VAEs and tabulate beta sweeps.
//!
//! `train` fits a fresh model (or resumes a checkpoint) and writes
//! `checkpoint.json` plus a per-step `trace.csv`. `sweep` loops
//! train + conditioned-matrix + CDS over a beta grid and several seeds and
//! tabulates the trend.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use latent_response::data;
use latent_response::response::{cds, conditioned_response_matrix};
use latent_response::rng;
use latent_response::stats;
use latent_response::vae::{load_checkpoint, save_checkpoint, train, TrainConfig, VaeModel};
use latent_response::Error;

use crate::config::{require, write_manifest};
use crate::error::{CliError, Result};

/// Named presets supplying architecture and optimizer defaults.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// The double-helix recipe: 2-D latent space, 4 x 32 hidden layers,
    /// beta 0.05, 5000 steps. This is also the default when no preset is
    /// given, so the flag mostly serves as documentation.
    Helix,
}

/// Flags for `train`.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainArgs {
    /// Training dataset CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Resume from an existing checkpoint instead of a fresh model.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Named preset (fresh models only).
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Number of Adam steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Minibatch size.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// KL weight.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Master seed; init, batch, and noise streams derive from it.
    #[arg(long)]
    pub seed: Option<u32>,
    /// Latent dimension (fresh models only).
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Comma-separated hidden layer widths (fresh models only).
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Standardize observations with training statistics (fresh models only).
    #[arg(long)]
    pub standardize: Option<bool>,
    /// Output directory (receives checkpoint.json, trace.csv, manifest.toml).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl TrainArgs {
    fn overlay(self, file: Option<Self>) -> Self {
        let f = file.unwrap_or_default();
        TrainArgs {
            data: self.data.or(f.data),
            init: self.init.or(f.init),
            preset: self.preset.or(f.preset),
            steps: self.steps.or(f.steps),
            batch_size: self.batch_size.or(f.batch_size),
            lr: self.lr.or(f.lr),
            beta: self.beta.or(f.beta),
            seed: self.seed.or(f.seed),
            latent_dim: self.latent_dim.or(f.latent_dim),
            hidden: self.hidden.or(f.hidden),
            standardize: self.standardize.or(f.standardize),
            out: self.out.or(f.out),
        }
    }
}

/// Resolved training parameters, recorded in the manifest. Architecture
/// fields are absent when resuming (the checkpoint fixes them).
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct TrainParams {
    data: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    init: Option<PathBuf>,
    steps: usize,
    batch_size: usize,
    lr: f64,
    beta: f64,
    seed: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    latent_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hidden: Option<Vec<usize>>,
    standardize: bool,
    out: PathBuf,
}

pub fn run_train(args: TrainArgs, file: Option<TrainArgs>) -> Result<()> {
    let m = args.overlay(file);
    if m.init.is_some() {
        for (set, flag) in [
            (m.preset.is_some(), "--preset"),
            (m.latent_dim.is_some(), "--latent-dim"),
            (m.hidden.is_some(), "--hidden"),
            (m.standardize == Some(true), "--standardize true"),
        ] {
            if set {
                return Err(CliError::usage(format!(
                    "{flag} conflicts with --init: the checkpoint fixes the architecture and \
                     normalization"
                )));
            }
        }
    }

    let data_path = require(m.data, "data")?;
    let out = require(m.out, "out")?;
    let dataset = data::read_csv(&data_path)?;
    let preset = TrainConfig::default();

    // Resolve parameters and build the starting model. On resume, beta and
    // seed default to the checkpoint's own values so that zero extra steps
    // reproduce it bitwise.
    let (mut model, params) = match m.init {
        Some(init) => {
            let model = load_checkpoint(&init)?;
            let params = TrainParams {
                data: data_path,
                init: Some(init),
                steps: m.steps.unwrap_or(preset.steps),
                batch_size: m.batch_size.unwrap_or(preset.batch_size),
                lr: m.lr.unwrap_or(preset.lr),
                beta: m.beta.unwrap_or(model.beta()),
                seed: m.seed.unwrap_or(model.seed() as u32),
                latent_dim: None,
                hidden: None,
                standardize: false,
                out,
            };
            (model, params)
        }
        None => {
            let latent_dim = m.latent_dim.unwrap_or(preset.latent_dim);
            let hidden = m.hidden.unwrap_or_else(|| preset.hidden.clone());
            let beta = m.beta.unwrap_or(preset.beta);
            let seed = m.seed.unwrap_or(0);
            let model =
                VaeModel::new(dataset.obs_dim(), latent_dim, &hidden, beta, seed as u64)?;
            let params = TrainParams {
                data: data_path,
                init: None,
                steps: m.steps.unwrap_or(preset.steps),
                batch_size: m.batch_size.unwrap_or(preset.batch_size),
                lr: m.lr.unwrap_or(preset.lr),
                beta,
                seed,
                latent_dim: Some(latent_dim),
                hidden: Some(hidden),
                standardize: m.standardize.unwrap_or(true),
                out,
            };
            (model, params)
        }
    };

    let config = TrainConfig {
        steps: params.steps,
        batch_size: params.batch_size,
        lr: params.lr,
        beta: params.beta,
        seed: params.seed as u64,
        latent_dim: model.latent_dim(),
        hidden: Vec::new(),
        standardize: params.standardize,
    };

    write_manifest(&params.out, "train", &params)?;
    let report = train(&mut model, &dataset, &config)?;
    write_trace(&params.out.join("trace.csv"), &report.trace)?;

    if let Some(step) = report.diverged_at {
        return Err(CliError::Core(Error::NonFinite(format!(
            "training diverged at step {step}; the partial trace was written, no checkpoint"
        ))));
    }
    let ckpt = params.out.join("checkpoint.json");
    save_checkpoint(&model, &ckpt)?;
    match report.final_loss() {
        Some(loss) => println!(
            "trained {} steps, final loss {loss:.6} -> {}",
            params.steps,
            ckpt.display()
        ),
        None => println!("no steps run; initial model saved -> {}", ckpt.display()),
    }
    Ok(())
}

fn write_trace(path: &std::path::Path, trace: &[latent_response::vae::TraceRow]) -> Result<()> {
    let mut text = String::from("step,loss,recon,kl\n");
    for row in trace {
        text.push_str(&format!("{},{},{},{}\n", row.step, row.loss, row.recon, row.kl));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Flags for `sweep`.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SweepArgs {
    /// Labeled factor dataset CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated KL weights to sweep.
    #[arg(long, value_delimiter = ',')]
    pub betas: Option<Vec<f64>>,
    /// Independent training runs per beta.
    #[arg(long)]
    pub n_seeds: Option<usize>,
    /// Adam steps per run.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Minibatch size.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Latent dimension; defaults to the dataset's factor count.
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Comma-separated hidden layer widths.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Monte-Carlo draws per conditioned-matrix cell.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Master seed; each run trains under a named sub-stream.
    #[arg(long)]
    pub seed: Option<u32>,
    /// Output directory (receives sweep.csv, report.txt, manifest.toml).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Resolved sweep parameters, recorded in the manifest.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct SweepParams {
    data: PathBuf,
    betas: Vec<f64>,
    n_seeds: usize,
    steps: usize,
    batch_size: usize,
    lr: f64,
    latent_dim: usize,
    hidden: Vec<usize>,
    samples: usize,
    seed: u32,
    out: PathBuf,
}

struct SweepRow {
    beta: f64,
    run: usize,
    seed: u64,
    final_loss: f64,
    raw: f64,
    rescaled: f64,
}

pub fn run_sweep(args: SweepArgs, file: Option<SweepArgs>) -> Result<()> {
    let f = file.unwrap_or_default();
    let data_path = require(args.data.or(f.data), "data")?;
    let out = require(args.out.or(f.out), "out")?;
    let dataset = data::read_csv(&data_path)?;
    if dataset.labels().is_none() {
        return Err(CliError::Core(Error::InvalidInput(
            "sweep needs a labeled factor dataset".to_string(),
        )));
    }
    let params = SweepParams {
        data: data_path,
        betas: args.betas.or(f.betas).unwrap_or_else(|| vec![0.5, 1.0, 2.0, 4.0]),
        n_seeds: args.n_seeds.or(f.n_seeds).unwrap_or(3),
        steps: args.steps.or(f.steps).unwrap_or(2000),
        batch_size: args.batch_size.or(f.batch_size).unwrap_or(64),
        lr: args.lr.or(f.lr).unwrap_or(1e-3),
        latent_dim: args.latent_dim.or(f.latent_dim).unwrap_or(dataset.n_factors()),
        hidden: args.hidden.or(f.hidden).unwrap_or_else(|| vec![32, 32]),
        samples: args.samples.or(f.samples).unwrap_or(10_000),
        seed: args.seed.or(f.seed).unwrap_or(0),
        out,
    };
    if params.betas.is_empty() {
        return Err(CliError::usage("--betas needs at least one value"));
    }
    write_manifest(&params.out, "sweep", &params)?;

    let mut rows = Vec::new();
    for (bi, &beta) in params.betas.iter().enumerate() {
        for run in 0..params.n_seeds {
            let train_seed = rng::sub_seed(params.seed as u64, &format!("b{bi}-r{run}"));
            let config = TrainConfig {
                steps: params.steps,
                batch_size: params.batch_size,
                lr: params.lr,
                beta,
                seed: train_seed,
                latent_dim: params.latent_dim,
                hidden: params.hidden.clone(),
                standardize: true,
            };
            let (model, report) = latent_response::vae::train_new(&dataset, &config)?;
            if let Some(step) = report.diverged_at {
                return Err(CliError::Core(Error::NonFinite(format!(
                    "run (beta {beta}, seed index {run}) diverged at step {step}"
                ))));
            }
            let matrix = conditioned_response_matrix(
                &model,
                &dataset,
                params.samples,
                rng::sub_seed(train_seed, "mc"),
            )?;
            let score = cds(&matrix)?;
            rows.push(SweepRow {
                beta,
                run,
                seed: train_seed,
                final_loss: report.final_loss().unwrap_or(f64::NAN),
                raw: score.raw,
                rescaled: score.rescaled,
            });
        }
    }

    // Aggregate per beta and correlate.
    let means: Vec<(f64, f64)> = params
        .betas
        .iter()
        .map(|&beta| {
            let scores: Vec<f64> =
                rows.iter().filter(|r| r.beta == beta).map(|r| r.rescaled).collect();
            (beta, scores.iter().sum::<f64>() / scores.len() as f64)
        })
        .collect();
    let rho = if means.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = means.iter().copied().unzip();
        Some(stats::spearman(&xs, &ys)?)
    } else {
        None
    };

    let mut csv = String::from("beta,run,seed,final-loss,cds-raw,cds-rescaled\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.beta, r.run, r.seed, r.final_loss, r.raw, r.rescaled
        ));
    }
    fs::write(params.out.join("sweep.csv"), csv)?;

    let mut report = format!(
        "beta sweep: {} betas x {} runs, {} steps each\nsamples per matrix cell: {}\nseed: {}\n\n",
        params.betas.len(),
        params.n_seeds,
        params.steps,
        params.samples,
        params.seed
    );
    report.push_str(&format!(
        "{:>8} {:>4} {:>20} {:>12} {:>10} {:>12}\n",
        "beta", "run", "seed", "final-loss", "cds-raw", "cds-rescaled"
    ));
    for r in &rows {
        report.push_str(&format!(
            "{:>8} {:>4} {:>20} {:>12.6} {:>10.6} {:>12.6}\n",
            r.beta, r.run, r.seed, r.final_loss, r.raw, r.rescaled
        ));
    }
    report.push('\n');
    let mut table = format!("{:>8} {:>12}\n", "beta", "mean-cds");
    for (beta, mean) in &means {
        table.push_str(&format!("{beta:>8} {mean:>12.6}\n"));
    }
    report.push_str(&table);
    if let Some(rho) = rho {
        report.push_str(&format!("\nspearman(beta, mean-cds) = {rho}\n"));
    }
    fs::write(params.out.join("report.txt"), &report)?;

    print!("{table}");
    if let Some(rho) = rho {
        println!("spearman(beta, mean-cds) = {rho}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use latent_response::data::{gen_helix, HelixConfig};

    fn tiny_dataset(dir: &std::path::Path) -> PathBuf {
        let config = HelixConfig { n: 64, ..Default::default() };
        let dataset = gen_helix(&config).unwrap();
        let path = dir.join("dataset.csv");
        data::write_csv(&dataset, &path).unwrap();
        path
    }

    fn quick_args(data: PathBuf, out: PathBuf) -> TrainArgs {
        TrainArgs {
            data: Some(data),
            steps: Some(3),
            batch_size: Some(8),
            hidden: Some(vec![6]),
            out: Some(out),
            ..Default::default()
        }
    }

    #[test]
    fn resume_for_zero_steps_reproduces_the_checkpoint_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let data = tiny_dataset(dir.path());
        let first = dir.path().join("a");
        run_train(quick_args(data.clone(), first.clone()), None).unwrap();
        let original = fs::read(first.join("checkpoint.json")).unwrap();

        let second = dir.path().join("b");
        let resume = TrainArgs {
            data: Some(data),
            init: Some(first.join("checkpoint.json")),
            steps: Some(0),
            out: Some(second.clone()),
            ..Default::default()
        };
        run_train(resume, None).unwrap();
        let resumed = fs::read(second.join("checkpoint.json")).unwrap();
        assert_eq!(original, resumed);
    }

    #[test]
    fn architecture_flags_conflict_with_init() {
        let dir = tempfile::tempdir().unwrap();
        let data = tiny_dataset(dir.path());
        let args = TrainArgs {
            data: Some(data),
            init: Some(dir.path().join("nonexistent.json")),
            latent_dim: Some(3),
            out: Some(dir.path().join("o")),
            ..Default::default()
        };
        let err = run_train(args, None).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("--latent-dim"), "{err}");
    }

    #[test]
    fn flags_override_config_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let data = tiny_dataset(dir.path());
        let out = dir.path().join("o");
        let flags = quick_args(data.clone(), out.clone());
        let file = TrainArgs {
            data: Some(PathBuf::from("does-not-exist.csv")),
            steps: Some(999),
            seed: Some(5),
            ..Default::default()
        };
        run_train(flags, Some(file)).unwrap();

        let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
        assert!(manifest.contains("steps = 3"), "{manifest}");
        assert!(manifest.contains("seed = 5"), "{manifest}");
        let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
        assert_eq!(trace.lines().count(), 4, "{trace}");
    }

    #[test]
    fn training_writes_a_loadable_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let data = tiny_dataset(dir.path());
        let out = dir.path().join("o");
        run_train(quick_args(data, out.clone()), None).unwrap();
        let model = load_checkpoint(&out.join("checkpoint.json")).unwrap();
        assert_eq!(model.obs_dim(), 3);
        assert_eq!(model.latent_dim(), 2);
    }
}
