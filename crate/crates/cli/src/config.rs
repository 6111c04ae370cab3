//! Config files and run manifests.
//!
//! A config file carries one optional section per command whose keys mirror
//! that command's flags one-to-one (kebab-case); flags override file values.
//! Every run writes a `manifest.toml` into its output directory holding the
//! fully resolved parameters plus the command name and code version. A
//! manifest is itself a valid config file, so
//! `latent-response --config out/manifest.toml` (no subcommand) reruns the
//! exact same job and reproduces the outputs byte for byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analyze::{CdsArgs, CondMatrixArgs, DiagnoseArgs, MatrixArgs, ResponsibilityArgs};
use crate::error::{CliError, Result};
use crate::gen::GenDataSection;
use crate::geo::{FieldArgs, InterpArgs, MapArgs};
use crate::train::{SweepArgs, TrainArgs};

/// A parsed config file. Every section is optional; `command` matters only
/// when the CLI is invoked without a subcommand (manifest rerun).
#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub command: Option<String>,
    /// Code version recorded by the run that wrote the file; informational.
    pub version: Option<String>,
    pub gen_data: Option<GenDataSection>,
    pub train: Option<TrainArgs>,
    pub matrix: Option<MatrixArgs>,
    pub cond_matrix: Option<CondMatrixArgs>,
    pub cds: Option<CdsArgs>,
    pub responsibility: Option<ResponsibilityArgs>,
    pub map: Option<MapArgs>,
    pub field: Option<FieldArgs>,
    pub interp: Option<InterpArgs>,
    pub diagnose: Option<DiagnoseArgs>,
    pub sweep: Option<SweepArgs>,
}

impl FileConfig {
    /// Loads `path`, or returns the empty config when no file was given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }
}

/// Creates the output directory if needed and writes `manifest.toml` with the
/// resolved parameters under a `[<command>]` section.
pub fn write_manifest<T: Serialize>(out: &Path, command: &str, params: &T) -> Result<()> {
    let section = toml::Value::try_from(params).map_err(|e| {
        CliError::Core(latent_response::Error::InvalidInput(format!(
            "cannot serialize the {command} manifest: {e}"
        )))
    })?;
    let mut root = toml::value::Table::new();
    root.insert("command".to_string(), toml::Value::String(command.to_string()));
    root.insert("version".to_string(), toml::Value::String(env!("CARGO_PKG_VERSION").to_string()));
    root.insert(command.to_string(), section);
    let text = toml::to_string(&root).map_err(|e| {
        CliError::Core(latent_response::Error::InvalidInput(format!(
            "cannot serialize the {command} manifest: {e}"
        )))
    })?;
    fs::create_dir_all(out)?;
    fs::write(out.join("manifest.toml"), text)?;
    Ok(())
}

/// Unwraps a value that must come from a flag or the config file.
pub fn require<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| {
        CliError::usage(format!(
            "missing --{flag}: pass the flag or set `{flag}` in a config file"
        ))
    })
}

/// Interprets a two-element list flag like `--dims 0,1` or `--range -3,3`.
pub fn pair<T: Copy>(values: &[T], flag: &str) -> Result<(T, T)> {
    match values {
        &[a, b] => Ok((a, b)),
        other => Err(CliError::usage(format!(
            "--{flag} needs exactly two comma-separated values, got {}",
            other.len()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_values_name_the_flag() {
        let err = require::<usize>(None, "out").unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("--out"), "{err}");
    }

    #[test]
    fn manifests_are_valid_configs() {
        #[derive(Serialize)]
        #[serde(rename_all = "kebab-case")]
        struct P {
            data: std::path::PathBuf,
            samples: usize,
        }
        let dir = tempfile::tempdir().unwrap();
        let p = P { data: "d.csv".into(), samples: 10 };
        write_manifest(dir.path(), "matrix", &p).unwrap();

        let cfg = FileConfig::load(Some(&dir.path().join("manifest.toml"))).unwrap();
        assert_eq!(cfg.command.as_deref(), Some("matrix"));
        let section = cfg.matrix.unwrap();
        assert_eq!(section.samples, Some(10));
        assert_eq!(section.data.as_deref(), Some(Path::new("d.csv")));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "[train]\nsteps = 5\ntypo-key = 1\n").unwrap();
        let err = FileConfig::load(Some(&path)).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("typo-key"), "{err}");
    }

    #[test]
    fn bad_pairs_are_usage_errors() {
        assert_eq!(pair(&[0.0, 1.0], "range").unwrap(), (0.0, 1.0));
        let err = pair(&[1], "dims").unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("--dims"), "{err}");
    }
}
