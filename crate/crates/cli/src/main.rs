//! latent-response: train small VAEs and analyze their latent response maps.
//!
//! Every command resolves its parameters from flags, then from the optional
//! `--config` file's matching section, then from built-in defaults, and
//! echoes the result into `<out>/manifest.toml`. Running the binary with
//! `--config <manifest>` and no subcommand reruns that job and reproduces its
//! outputs byte for byte.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/model error, 3 numerical
//! failure.

mod analyze;
mod config;
mod error;
mod gen;
mod geo;
mod train;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use config::FileConfig;
use error::{CliError, Result};

/// Latent response analysis for small VAEs: synthetic datasets, training,
/// response matrices and maps, disentanglement scores, and curvature-guided
/// interpolation.
#[derive(Parser, Debug)]
#[command(name = "latent-response", version, about)]
struct Cli {
    /// Config file with per-command sections; flags override file values.
    /// With no subcommand, the file's `command` key picks the job to rerun.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<std::path::PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset.
    #[command(subcommand)]
    GenData(gen::GenDataCmd),
    /// Train a VAE (fresh or resumed from a checkpoint).
    Train(train::TrainArgs),
    /// Estimate the latent response matrix of a checkpoint.
    Matrix(analyze::MatrixArgs),
    /// Estimate the factor-conditioned response matrix.
    CondMatrix(analyze::CondMatrixArgs),
    /// Compute the causal disentanglement score.
    Cds(analyze::CdsArgs),
    /// L1 linear responsibility baseline (factors from encoder means).
    Responsibility(analyze::ResponsibilityArgs),
    /// Export divergence/curvature/norm maps and the response field.
    Map(geo::MapArgs),
    /// Export the raw response field on a latent slice.
    Field(geo::FieldArgs),
    /// Compare straight and curvature-guided latent interpolation.
    Interp(geo::InterpArgs),
    /// Check the first-order response expansion at a dataset point.
    Diagnose(analyze::DiagnoseArgs),
    /// Loop train + cds over a beta grid and tabulate the trend.
    Sweep(train::SweepArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let Some(command) = cli.command else {
        return rerun_from_config(file, cli.config.is_some());
    };
    match command {
        Command::GenData(cmd) => gen::run(cmd, file.gen_data),
        Command::Train(args) => train::run_train(args, file.train),
        Command::Matrix(args) => analyze::run_matrix(args, file.matrix),
        Command::CondMatrix(args) => analyze::run_cond_matrix(args, file.cond_matrix),
        Command::Cds(args) => analyze::run_cds(args, file.cds),
        Command::Responsibility(args) => analyze::run_responsibility(args, file.responsibility),
        Command::Map(args) => geo::run_map(args, file.map),
        Command::Field(args) => geo::run_field(args, file.field),
        Command::Interp(args) => geo::run_interp(args, file.interp),
        Command::Diagnose(args) => analyze::run_diagnose(args, file.diagnose),
        Command::Sweep(args) => train::run_sweep(args, file.sweep),
    }
}

/// Dispatches a config file that names its own command (a run manifest).
fn rerun_from_config(file: FileConfig, have_config: bool) -> Result<()> {
    if !have_config {
        return Err(CliError::usage(
            "no command given; run `latent-response <COMMAND>` or `--config <MANIFEST>`",
        ));
    }
    let Some(command) = file.command.clone() else {
        return Err(CliError::usage(
            "the config file names no `command`; pass a subcommand explicitly",
        ));
    };
    if let Some(written_by) = &file.version {
        let current = env!("CARGO_PKG_VERSION");
        if written_by != current {
            eprintln!("note: manifest written by version {written_by}, rerunning with {current}");
        }
    }
    match command.as_str() {
        "gen-data" => gen::run_from_config(section(file.gen_data, &command)?),
        "train" => train::run_train(Default::default(), Some(section(file.train, &command)?)),
        "matrix" => analyze::run_matrix(Default::default(), Some(section(file.matrix, &command)?)),
        "cond-matrix" => analyze::run_cond_matrix(
            Default::default(),
            Some(section(file.cond_matrix, &command)?),
        ),
        "cds" => analyze::run_cds(Default::default(), Some(section(file.cds, &command)?)),
        "responsibility" => analyze::run_responsibility(
            Default::default(),
            Some(section(file.responsibility, &command)?),
        ),
        "map" => geo::run_map(Default::default(), Some(section(file.map, &command)?)),
        "field" => geo::run_field(Default::default(), Some(section(file.field, &command)?)),
        "interp" => geo::run_interp(Default::default(), Some(section(file.interp, &command)?)),
        "diagnose" => {
            analyze::run_diagnose(Default::default(), Some(section(file.diagnose, &command)?))
        }
        "sweep" => train::run_sweep(Default::default(), Some(section(file.sweep, &command)?)),
        other => Err(CliError::usage(format!("unknown command `{other}` in the config file"))),
    }
}

fn section<T>(value: Option<T>, name: &str) -> Result<T> {
    value.ok_or_else(|| {
        CliError::usage(format!("config names command `{name}` but has no [{name}] section"))
    })
}
