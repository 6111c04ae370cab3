//! Grid-based geometry commands: `map`, `field`, and `interp`.
//!
//! All three evaluate the response field on a 2-D latent slice. `map` exports
//! divergence, mean-curvature, and field-norm maps (CSV + PGM) plus the raw
//! field file; `field` exports just the field file; `interp` compares a
//! straight latent interpolation against the curvature-guided grid path.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use latent_response::data;
use latent_response::geometry::{divergence, field_norm, mean_curvature, ResponseGrid, ScalarMap};
use latent_response::interp::{ambient_metrics, curvature_path, path_length, straight_path};
use latent_response::vae::{load_checkpoint, VaeModel};

use crate::config::{pair, require, write_manifest};
use crate::error::{CliError, Result};

/// Flags for `map`.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MapArgs {
    /// Model checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// The two latent dimensions spanning the slice, e.g. `0,1`.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Coordinate range for both axes, e.g. `-3,3`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub range: Option<Vec<f64>>,
    /// Nodes per axis.
    #[arg(long, visible_alias = "resolution")]
    pub res: Option<usize>,
    /// Anchor fixing the off-slice coordinates (defaults to the origin).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub anchor: Option<Vec<f64>>,
    /// Field-norm floor for curvature normalization; cells below it are
    /// singular.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Output directory (receives the map CSV/PGM pairs, field.csv,
    /// manifest.toml).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct MapParams {
    model: PathBuf,
    dims: Vec<usize>,
    range: Vec<f64>,
    res: usize,
    anchor: Vec<f64>,
    eps: f64,
    out: PathBuf,
}

pub fn run_map(args: MapArgs, file: Option<MapArgs>) -> Result<()> {
    let f = file.unwrap_or_default();
    let model_path = require(args.model.or(f.model), "model")?;
    let model = load_checkpoint(&model_path)?;
    let params = MapParams {
        model: model_path,
        dims: args.dims.or(f.dims).unwrap_or_else(|| vec![0, 1]),
        range: args.range.or(f.range).unwrap_or_else(|| vec![-3.0, 3.0]),
        res: args.res.or(f.res).unwrap_or(64),
        anchor: args.anchor.or(f.anchor).unwrap_or_else(|| vec![0.0; model.latent_dim()]),
        eps: args.eps.or(f.eps).unwrap_or(1e-3),
        out: require(args.out.or(f.out), "out")?,
    };
    write_manifest(&params.out, "map", &params)?;
    let grid = build_grid(&model, &params.dims, &params.range, params.res, &params.anchor)?;

    let maps = [divergence(&grid), mean_curvature(&grid, params.eps)?, field_norm(&grid)];
    for map in &maps {
        write_map(&params.out, map)?;
    }
    write_field(&params.out, &grid)?;

    for map in &maps {
        match map.extrema() {
            Some((lo, hi)) => println!(
                "{}: [{lo:.6}, {hi:.6}], {} singular cells",
                map.name(),
                map.singular_count()
            ),
            None => println!("{}: all {} cells singular", map.name(), map.singular_count()),
        }
    }
    println!("wrote maps and field -> {}", params.out.display());
    Ok(())
}

/// Flags for `field` (the `map` flags minus `eps`).
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FieldArgs {
    /// Model checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// The two latent dimensions spanning the slice, e.g. `0,1`.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Coordinate range for both axes, e.g. `-3,3`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub range: Option<Vec<f64>>,
    /// Nodes per axis.
    #[arg(long, visible_alias = "resolution")]
    pub res: Option<usize>,
    /// Anchor fixing the off-slice coordinates (defaults to the origin).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub anchor: Option<Vec<f64>>,
    /// Output directory (receives field.csv and manifest.toml).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct FieldParams {
    model: PathBuf,
    dims: Vec<usize>,
    range: Vec<f64>,
    res: usize,
    anchor: Vec<f64>,
    out: PathBuf,
}

pub fn run_field(args: FieldArgs, file: Option<FieldArgs>) -> Result<()> {
    let f = file.unwrap_or_default();
    let model_path = require(args.model.or(f.model), "model")?;
    let model = load_checkpoint(&model_path)?;
    let params = FieldParams {
        model: model_path,
        dims: args.dims.or(f.dims).unwrap_or_else(|| vec![0, 1]),
        range: args.range.or(f.range).unwrap_or_else(|| vec![-3.0, 3.0]),
        res: args.res.or(f.res).unwrap_or(64),
        anchor: args.anchor.or(f.anchor).unwrap_or_else(|| vec![0.0; model.latent_dim()]),
        out: require(args.out.or(f.out), "out")?,
    };
    write_manifest(&params.out, "field", &params)?;
    let grid = build_grid(&model, &params.dims, &params.range, params.res, &params.anchor)?;
    write_field(&params.out, &grid)?;
    println!(
        "response field on dims ({}, {}), {res}x{res} nodes -> {}",
        params.dims[0],
        params.dims[1],
        params.out.display(),
        res = params.res,
    );
    Ok(())
}

/// Flags for `interp`.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct InterpArgs {
    /// Model checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// The two latent dimensions spanning the slice, e.g. `0,1`.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Coordinate range for both axes, e.g. `-3,3`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub range: Option<Vec<f64>>,
    /// Nodes per axis.
    #[arg(long, visible_alias = "resolution")]
    pub res: Option<usize>,
    /// Anchor fixing the off-slice coordinates (defaults to the origin).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub anchor: Option<Vec<f64>>,
    /// Field-norm floor for curvature normalization.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Curvature avoidance strength (0 = uniform geodesic).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Start point as slice coordinates `x,y`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub from: Option<Vec<f64>>,
    /// Goal point as slice coordinates `x,y`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub to: Option<Vec<f64>>,
    /// Start point as a dataset row index (encoded to its posterior mean).
    #[arg(long)]
    pub from_row: Option<usize>,
    /// Goal point as a dataset row index.
    #[arg(long)]
    pub to_row: Option<usize>,
    /// Dataset CSV (required with --from-row/--to-row).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Waypoints on the straight path (defaults to the guided path's count).
    #[arg(long)]
    pub k: Option<usize>,
    /// Output directory (receives straight.csv, guided.csv, metrics.json,
    /// manifest.toml).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
struct InterpParams {
    model: PathBuf,
    dims: Vec<usize>,
    range: Vec<f64>,
    res: usize,
    anchor: Vec<f64>,
    eps: f64,
    gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    from: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    to: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    from_row: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    to_row: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<PathBuf>,
    k: usize,
    out: PathBuf,
}

/// Per-path entry in `metrics.json`.
#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct PathMetrics {
    points: usize,
    latent_length: f64,
    /// Grid traversal cost (guided path only).
    #[serde(skip_serializing_if = "Option::is_none")]
    cost: Option<f64>,
    ambient_length: f64,
    max_jump: f64,
}

#[derive(Serialize)]
struct InterpMetrics {
    straight: PathMetrics,
    guided: PathMetrics,
}

pub fn run_interp(args: InterpArgs, file: Option<InterpArgs>) -> Result<()> {
    let f = file.unwrap_or_default();
    let model_path = require(args.model.or(f.model), "model")?;
    let model = load_checkpoint(&model_path)?;

    let dims = args.dims.or(f.dims).unwrap_or_else(|| vec![0, 1]);
    let range = args.range.or(f.range).unwrap_or_else(|| vec![-3.0, 3.0]);
    let res = args.res.or(f.res).unwrap_or(64);
    let anchor = args.anchor.or(f.anchor).unwrap_or_else(|| vec![0.0; model.latent_dim()]);
    let eps = args.eps.or(f.eps).unwrap_or(1e-3);
    let gamma = args.gamma.or(f.gamma).unwrap_or(2.0);
    let from = args.from.or(f.from);
    let to = args.to.or(f.to);
    let from_row = args.from_row.or(f.from_row);
    let to_row = args.to_row.or(f.to_row);
    let data_path = args.data.or(f.data);
    let out = require(args.out.or(f.out), "out")?;

    // Endpoints: explicit slice coordinates or dataset rows, not both.
    for (coords, row, name) in [(&from, from_row, "from"), (&to, to_row, "to")] {
        match (coords.is_some(), row.is_some()) {
            (true, true) => {
                return Err(CliError::usage(format!(
                    "--{name} and --{name}-row are mutually exclusive"
                )))
            }
            (false, false) => {
                return Err(CliError::usage(format!(
                    "missing endpoint: pass --{name} x,y or --{name}-row INDEX"
                )))
            }
            _ => {}
        }
    }
    let dataset = match &data_path {
        Some(path) => Some(data::read_csv(path)?),
        None if from_row.is_some() || to_row.is_some() => {
            return Err(CliError::usage("--from-row/--to-row need --data to resolve rows"))
        }
        None => None,
    };

    let (d0, d1) = pair(&dims, "dims")?;
    let encode_row = |row: usize| -> Result<(f64, f64)> {
        let dataset = dataset.as_ref().expect("checked above");
        if row >= dataset.len() {
            return Err(CliError::usage(format!(
                "row {row} is out of range: the dataset has {} rows",
                dataset.len()
            )));
        }
        let mean = model.encode(dataset.row(row)).mean;
        Ok((mean[d0], mean[d1]))
    };
    let start = match &from {
        Some(coords) => pair(coords, "from")?,
        None => encode_row(from_row.expect("checked above"))?,
    };
    let goal = match &to {
        Some(coords) => pair(coords, "to")?,
        None => encode_row(to_row.expect("checked above"))?,
    };

    let grid = build_grid(&model, &dims, &range, res, &anchor)?;
    let map = mean_curvature(&grid, eps)?;
    let guided = curvature_path(&grid, &map, start, goal, gamma)?;

    let k = args.k.or(f.k).unwrap_or_else(|| guided.points.len().max(2));
    let mut a = anchor.clone();
    a[d0] = start.0;
    a[d1] = start.1;
    let mut b = anchor.clone();
    b[d0] = goal.0;
    b[d1] = goal.1;
    let straight = straight_path(&a, &b, k)?;

    let params = InterpParams {
        model: model_path,
        dims,
        range,
        res,
        anchor,
        eps,
        gamma,
        from,
        to,
        from_row,
        to_row,
        data: data_path,
        k,
        out,
    };
    write_manifest(&params.out, "interp", &params)?;

    write_path_csv(&params.out.join("straight.csv"), &model, &straight)?;
    write_path_csv(&params.out.join("guided.csv"), &model, &guided.points)?;

    let straight_ambient = ambient_metrics(&model, &straight)?;
    let guided_ambient = ambient_metrics(&model, &guided.points)?;
    let metrics = InterpMetrics {
        straight: PathMetrics {
            points: straight.len(),
            latent_length: path_length(&straight),
            cost: None,
            ambient_length: straight_ambient.total_length,
            max_jump: straight_ambient.max_jump,
        },
        guided: PathMetrics {
            points: guided.points.len(),
            latent_length: path_length(&guided.points),
            cost: Some(guided.cost),
            ambient_length: guided_ambient.total_length,
            max_jump: guided_ambient.max_jump,
        },
    };
    let mut json = serde_json::to_vec_pretty(&metrics)?;
    json.push(b'\n');
    fs::write(params.out.join("metrics.json"), json)?;

    println!(
        "straight: {} points, ambient length {:.6}, max jump {:.6}",
        metrics.straight.points, metrics.straight.ambient_length, metrics.straight.max_jump
    );
    println!(
        "guided:   {} points, ambient length {:.6}, max jump {:.6} (gamma {})",
        metrics.guided.points, metrics.guided.ambient_length, metrics.guided.max_jump, params.gamma
    );
    Ok(())
}

fn build_grid(
    model: &VaeModel,
    dims: &[usize],
    range: &[f64],
    res: usize,
    anchor: &[f64],
) -> Result<ResponseGrid> {
    let (d0, d1) = pair(dims, "dims")?;
    let (lo, hi) = pair(range, "range")?;
    Ok(ResponseGrid::evaluate(model, (d0, d1), anchor, lo, hi, res)?)
}

fn write_map(out: &Path, map: &ScalarMap) -> Result<()> {
    let mut csv = Vec::new();
    map.write_csv(&mut csv)?;
    fs::write(out.join(format!("{}.csv", map.name())), csv)?;
    let mut pgm = Vec::new();
    map.write_pgm(&mut pgm)?;
    fs::write(out.join(format!("{}.pgm", map.name())), pgm)?;
    Ok(())
}

fn write_field(out: &Path, grid: &ResponseGrid) -> Result<()> {
    let mut csv = Vec::new();
    grid.write_field_csv(&mut csv)?;
    fs::write(out.join("field.csv"), csv)?;
    Ok(())
}

/// Path CSV: latent coordinates, decoded observation, and the ambient jump
/// from the previous waypoint (empty on the first row).
fn write_path_csv(path: &Path, model: &VaeModel, points: &[Vec<f64>]) -> Result<()> {
    let decoded: Vec<Vec<f64>> = points.iter().map(|p| model.decode(p)).collect();
    let mut header: Vec<String> = (0..model.latent_dim()).map(|j| format!("z{j}")).collect();
    header.extend((0..model.obs_dim()).map(|j| format!("x{j}")));
    header.push("jump".to_string());

    let mut text = header.join(",");
    text.push('\n');
    for (i, (p, x)) in points.iter().zip(&decoded).enumerate() {
        let mut fields: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        fields.extend(x.iter().map(|v| v.to_string()));
        fields.push(if i == 0 {
            String::new()
        } else {
            let jump: f64 =
                x.iter().zip(&decoded[i - 1]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            jump.to_string()
        });
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}
