//! Response-matrix analysis commands: `matrix`, `cond-matrix`, `cds`,
//! `responsibility`, and the `diagnose` expansion check.
//!
//! Each command loads a checkpoint (plus a labeled dataset where factors are
//! involved), runs the corresponding estimator from the core library, and
//! writes a CSV (with sample counts, sources, and seeds as `#` comment
//! lines), a plain-text report, and the run manifest.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use latent_response::data;
use latent_response::nn::Matrix;
use latent_response::response::{
    cds, conditioned_response_matrix, expansion_diagnostic, responsibility_matrix,
    response_matrix, ExpansionReport, InterventionSource,
};
use latent_response::rng;
use latent_response::vae::load_checkpoint;

use crate::config::{require, write_manifest};
use crate::error::{CliError, Result};

/// Where intervention values are drawn from (CLI mirror of the library's
/// intervention source).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    /// Standard-normal prior marginal.
    #[default]
    Prior,
    /// Posterior draws for random dataset rows.
    AggregatePosterior,
}

impl From<Source> for InterventionSource {
    fn from(s: Source) -> Self {
        match s {
            Source::Prior => InterventionSource::Prior,
            Source::AggregatePosterior => InterventionSource::AggregatePosterior,
        }
    }
}

/// Flags for `matrix`.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MatrixArgs {
    /// Model checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Monte-Carlo draws per intervened dimension.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Intervention source.
    #[arg(long, value_enum)]
    pub source: Option<Source>,
    /// Dataset CSV (required for --source aggregate-posterior).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Monte-Carlo seed.
    #[arg(long)]
    pub seed: Option<u32>,
    /// Output directory (receives matrix.csv, report.txt, manifest.toml).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct MatrixParams {
    model: PathBuf,
    samples: usize,
    source: Source,
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<PathBuf>,
    seed: u32,
    out: PathBuf,
}

pub fn run_matrix(args: MatrixArgs, file: Option<MatrixArgs>) -> Result<()> {
    let f = file.unwrap_or_default();
    let params = MatrixParams {
        model: require(args.model.or(f.model), "model")?,
        samples: args.samples.or(f.samples).unwrap_or(10_000),
        source: args.source.or(f.source).unwrap_or_default(),
        data: args.data.or(f.data),
        seed: args.seed.or(f.seed).unwrap_or(0),
        out: require(args.out.or(f.out), "out")?,
    };
    if params.source == Source::AggregatePosterior && params.data.is_none() {
        return Err(CliError::usage(
            "--source aggregate-posterior needs --data to draw posterior interventions from",
        ));
    }
    let model = load_checkpoint(&params.model)?;
    let dataset = params.data.as_deref().map(data::read_csv).transpose()?;
    write_manifest(&params.out, "matrix", &params)?;

    let matrix = response_matrix(
        &model,
        params.samples,
        params.source.into(),
        dataset.as_ref(),
        params.seed as u64,
    )?;

    let mut buf = Vec::new();
    push_comments(
        &mut buf,
        &[
            ("samples", matrix.n_samples().to_string()),
            ("source", matrix.source().name().to_string()),
            ("seed", matrix.seed().to_string()),
        ],
    );
    matrix.write_csv(&mut buf)?;
    fs::write(params.out.join("matrix.csv"), buf)?;

    let mut report = format!(
        "response matrix\nsamples: {}\nsource: {}\nseed: {}\n\n",
        matrix.n_samples(),
        matrix.source().name(),
        matrix.seed()
    );
    report.push_str(&table(matrix.entries(), "z", "z"));
    fs::write(params.out.join("report.txt"), report)?;

    println!(
        "response matrix {d}x{d}, source {}, {} draws -> {}",
        matrix.source().name(),
        matrix.n_samples(),
        params.out.display(),
        d = matrix.dim(),
    );
    Ok(())
}

/// Flags for `cond-matrix`.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CondMatrixArgs {
    /// Model checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Labeled dataset CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Monte-Carlo draw budget per matrix cell.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Monte-Carlo seed.
    #[arg(long)]
    pub seed: Option<u32>,
    /// Output directory (receives cond-matrix.csv, report.txt, manifest.toml).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct CondMatrixParams {
    model: PathBuf,
    data: PathBuf,
    samples: usize,
    seed: u32,
    out: PathBuf,
}

fn resolve_cond(args: CondMatrixArgs, file: Option<CondMatrixArgs>) -> Result<CondMatrixParams> {
    let f = file.unwrap_or_default();
    Ok(CondMatrixParams {
        model: require(args.model.or(f.model), "model")?,
        data: require(args.data.or(f.data), "data")?,
        samples: args.samples.or(f.samples).unwrap_or(10_000),
        seed: args.seed.or(f.seed).unwrap_or(0),
        out: require(args.out.or(f.out), "out")?,
    })
}

pub fn run_cond_matrix(args: CondMatrixArgs, file: Option<CondMatrixArgs>) -> Result<()> {
    let params = resolve_cond(args, file)?;
    let model = load_checkpoint(&params.model)?;
    let dataset = data::read_csv(&params.data)?;
    write_manifest(&params.out, "cond-matrix", &params)?;

    let matrix = conditioned_response_matrix(&model, &dataset, params.samples, params.seed as u64)?;

    let counts = |v: &[usize]| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
    let mut buf = Vec::new();
    push_comments(
        &mut buf,
        &[
            ("samples", params.samples.to_string()),
            ("seed", matrix.seed().to_string()),
            ("strata", counts(matrix.strata_counts())),
            ("draws", counts(matrix.sample_counts())),
        ],
    );
    matrix.write_csv(&mut buf)?;
    fs::write(params.out.join("cond-matrix.csv"), buf)?;

    let mut report = format!(
        "conditioned response matrix\nsamples per cell: {}\nseed: {}\n\n",
        params.samples,
        matrix.seed()
    );
    for c in 0..matrix.n_factors() {
        report.push_str(&format!(
            "factor y{c}: {} strata, {} draws\n",
            matrix.strata_counts()[c],
            matrix.sample_counts()[c]
        ));
    }
    report.push('\n');
    report.push_str(&table(matrix.entries(), "y", "z"));
    fs::write(params.out.join("report.txt"), report)?;

    println!(
        "conditioned response matrix {}x{} -> {}",
        matrix.n_factors(),
        matrix.latent_dim(),
        params.out.display()
    );
    Ok(())
}

/// Flags for `cds` (same inputs as `cond-matrix`).
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CdsArgs {
    /// Model checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Labeled dataset CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Monte-Carlo draw budget per matrix cell.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Monte-Carlo seed.
    #[arg(long)]
    pub seed: Option<u32>,
    /// Output directory (receives cds.json, report.txt, manifest.toml).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct CdsOutput {
    raw: f64,
    rescaled: f64,
    retained_columns: Vec<usize>,
    n_factors: usize,
    latent_dim: usize,
    samples: usize,
    seed: u32,
}

pub fn run_cds(args: CdsArgs, file: Option<CdsArgs>) -> Result<()> {
    let f = file.unwrap_or_default();
    let args = CondMatrixArgs {
        model: args.model.or(f.model),
        data: args.data.or(f.data),
        samples: args.samples.or(f.samples),
        seed: args.seed.or(f.seed),
        out: args.out.or(f.out),
    };
    let params = resolve_cond(args, None)?;
    let model = load_checkpoint(&params.model)?;
    let dataset = data::read_csv(&params.data)?;
    write_manifest(&params.out, "cds", &params)?;

    let matrix = conditioned_response_matrix(&model, &dataset, params.samples, params.seed as u64)?;
    let score = cds(&matrix)?;

    let output = CdsOutput {
        raw: score.raw,
        rescaled: score.rescaled,
        retained_columns: score.retained_columns.clone(),
        n_factors: matrix.n_factors(),
        latent_dim: matrix.latent_dim(),
        samples: params.samples,
        seed: params.seed,
    };
    let mut json = serde_json::to_vec_pretty(&output)?;
    json.push(b'\n');
    fs::write(params.out.join("cds.json"), json)?;

    let report = format!(
        "causal disentanglement score\nsamples per cell: {}\nseed: {}\nfactors: {}\nlatent dim: \
         {}\nretained columns: {:?}\n\nraw: {}\nrescaled: {}\n",
        params.samples,
        params.seed,
        matrix.n_factors(),
        matrix.latent_dim(),
        score.retained_columns,
        score.raw,
        score.rescaled
    );
    fs::write(params.out.join("report.txt"), report)?;

    println!("cds raw {} rescaled {} -> {}", score.raw, score.rescaled, params.out.display());
    Ok(())
}

/// Flags for `responsibility`.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ResponsibilityArgs {
    /// Model checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Labeled dataset CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// L1 penalty for the per-factor linear fits.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Cap on dataset rows entering the fits (subsampled deterministically).
    #[arg(long)]
    pub max_rows: Option<usize>,
    /// Subsampling seed.
    #[arg(long)]
    pub seed: Option<u32>,
    /// Output directory (receives responsibility.csv, report.txt,
    /// manifest.toml).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct ResponsibilityParams {
    model: PathBuf,
    data: PathBuf,
    lambda: f64,
    max_rows: usize,
    seed: u32,
    out: PathBuf,
}

pub fn run_responsibility(
    args: ResponsibilityArgs,
    file: Option<ResponsibilityArgs>,
) -> Result<()> {
    let f = file.unwrap_or_default();
    let params = ResponsibilityParams {
        model: require(args.model.or(f.model), "model")?,
        data: require(args.data.or(f.data), "data")?,
        lambda: args.lambda.or(f.lambda).unwrap_or(0.01),
        max_rows: args.max_rows.or(f.max_rows).unwrap_or(4096),
        seed: args.seed.or(f.seed).unwrap_or(0),
        out: require(args.out.or(f.out), "out")?,
    };
    let model = load_checkpoint(&params.model)?;
    let dataset = data::read_csv(&params.data)?;
    write_manifest(&params.out, "responsibility", &params)?;

    let matrix =
        responsibility_matrix(&model, &dataset, params.lambda, params.max_rows, params.seed as u64)?;

    let mut buf = Vec::new();
    push_comments(
        &mut buf,
        &[
            ("lambda", params.lambda.to_string()),
            ("rows", matrix.n_rows().to_string()),
            ("seed", params.seed.to_string()),
        ],
    );
    matrix.write_csv(&mut buf)?;
    fs::write(params.out.join("responsibility.csv"), buf)?;

    let mut report = format!(
        "responsibility matrix (L1 linear baseline)\nlambda: {}\nrows: {}\nseed: {}\n",
        params.lambda,
        matrix.n_rows(),
        params.seed
    );
    if !matrix.degenerate_factors().is_empty() {
        report.push_str(&format!(
            "warning: constant factors with zero rows: {:?}\n",
            matrix.degenerate_factors()
        ));
    }
    report.push('\n');
    report.push_str(&table(matrix.entries(), "y", "z"));
    fs::write(params.out.join("report.txt"), report)?;

    println!(
        "responsibility matrix {}x{} from {} rows -> {}",
        matrix.n_factors(),
        matrix.latent_dim(),
        matrix.n_rows(),
        params.out.display()
    );
    Ok(())
}

/// Flags for `diagnose`.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DiagnoseArgs {
    /// Model checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dataset CSV supplying the observation.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Dataset row index of the observation.
    #[arg(long)]
    pub row: Option<usize>,
    /// Norm of the latent perturbation u.
    #[arg(long)]
    pub u_norm: Option<f64>,
    /// Central-difference step for the Jacobians.
    #[arg(long)]
    pub fd_step: Option<f64>,
    /// Seed for the random perturbation direction.
    #[arg(long)]
    pub seed: Option<u32>,
    /// Output directory (receives diagnose.json, manifest.toml).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct DiagnoseParams {
    model: PathBuf,
    data: PathBuf,
    row: usize,
    u_norm: f64,
    fd_step: f64,
    seed: u32,
    out: PathBuf,
}

/// The expansion diagnostic at `u-norm` and `u-norm / 2`: term norms, both
/// residuals, and their ratio (nominal 4 for a second-order remainder).
#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct DiagnoseOutput {
    row: usize,
    u_norm: f64,
    fd_step: f64,
    seed: u32,
    s_norm: f64,
    recon_term_norm: f64,
    perturbation_term_norm: f64,
    residual_norm: f64,
    residual_norm_half: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual_ratio: Option<f64>,
    eps_norm: f64,
    eps_norm_half: f64,
    report: ExpansionReport,
}

pub fn run_diagnose(args: DiagnoseArgs, file: Option<DiagnoseArgs>) -> Result<()> {
    let f = file.unwrap_or_default();
    let params = DiagnoseParams {
        model: require(args.model.or(f.model), "model")?,
        data: require(args.data.or(f.data), "data")?,
        row: args.row.or(f.row).unwrap_or(0),
        u_norm: args.u_norm.or(f.u_norm).unwrap_or(0.2),
        fd_step: args.fd_step.or(f.fd_step).unwrap_or(1e-4),
        seed: args.seed.or(f.seed).unwrap_or(0),
        out: require(args.out.or(f.out), "out")?,
    };
    let model = load_checkpoint(&params.model)?;
    let dataset = data::read_csv(&params.data)?;
    if params.row >= dataset.len() {
        return Err(CliError::usage(format!(
            "--row {} is out of range: the dataset has {} rows",
            params.row,
            dataset.len()
        )));
    }
    write_manifest(&params.out, "diagnose", &params)?;

    let x = dataset.row(params.row);
    let u = random_direction(model.latent_dim(), params.seed as u64, params.u_norm);
    let half: Vec<f64> = u.iter().map(|v| v / 2.0).collect();
    let full_report = expansion_diagnostic(&model, x, &u, params.fd_step)?;
    let half_report = expansion_diagnostic(&model, x, &half, params.fd_step)?;

    let ratio = (half_report.residual_norm > 1e-300)
        .then(|| full_report.residual_norm / half_report.residual_norm);
    let output = DiagnoseOutput {
        row: params.row,
        u_norm: params.u_norm,
        fd_step: params.fd_step,
        seed: params.seed,
        s_norm: norm(&full_report.s),
        recon_term_norm: norm(&full_report.recon_term),
        perturbation_term_norm: norm(&full_report.perturbation_term),
        residual_norm: full_report.residual_norm,
        residual_norm_half: half_report.residual_norm,
        residual_ratio: ratio,
        eps_norm: full_report.eps_norm,
        eps_norm_half: half_report.eps_norm,
        report: full_report,
    };
    let mut json = serde_json::to_vec_pretty(&output)?;
    json.push(b'\n');
    fs::write(params.out.join("diagnose.json"), json)?;

    println!("expansion at row {}, |u| = {}:", params.row, params.u_norm);
    println!("  |s|                = {}", output.s_norm);
    println!("  |J_f (g(s) - x)|   = {}", output.recon_term_norm);
    println!("  |J_f J_g u|        = {}", output.perturbation_term_norm);
    println!("  residual at |u|    = {}", output.residual_norm);
    println!("  residual at |u|/2  = {}", output.residual_norm_half);
    match output.residual_ratio {
        Some(r) => println!("  ratio              = {r} (nominal 4)"),
        None => println!("  ratio              = n/a (half residual is zero)"),
    }
    println!("  eps = |g(s+u) - x| = {}", output.eps_norm);
    Ok(())
}

/// A deterministic direction of length `scale` from the `direction` stream.
fn random_direction(dim: usize, seed: u64, scale: f64) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rng::seeded(rng::sub_seed(seed, "direction"));
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|c| c * scale / n).collect();
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Prepends `# key: value` comment lines to a CSV buffer.
fn push_comments(buf: &mut Vec<u8>, items: &[(&str, String)]) {
    for (key, value) in items {
        buf.extend_from_slice(format!("# {key}: {value}\n").as_bytes());
    }
}

/// Fixed-width table with `rowp{i}` row labels and `colp{j}` column headers.
fn table(entries: &Matrix, rowp: &str, colp: &str) -> String {
    let mut text = format!("{:>6}", "");
    for j in 0..entries.cols() {
        text.push_str(&format!(" {:>12}", format!("{colp}{j}")));
    }
    text.push('\n');
    for i in 0..entries.rows() {
        text.push_str(&format!("{:>6}", format!("{rowp}{i}")));
        for j in 0..entries.cols() {
            text.push_str(&format!(" {:>12.6}", entries[(i, j)]));
        }
        text.push('\n');
    }
    text
}
