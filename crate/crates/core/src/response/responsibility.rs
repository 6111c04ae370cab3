//! Factor responsibility via sparse linear probes on posterior means.

use rand::seq::index::sample as index_sample;

use crate::data::{standardization_stats, Dataset};
use crate::nn::Matrix;
use crate::rng;
use crate::vae::VaeModel;
use crate::{Error, Result};

/// Absolute lasso coefficients of each factor regressed on the standardized
/// posterior means: entry `(c, j)` measures how much latent dimension `j`
/// linearly explains factor `c`. Rows for constant factors are zero.
#[derive(Debug, Clone)]
pub struct ResponsibilityMatrix {
    entries: Matrix,
    /// Factors whose values never vary in the (sub)sample; their rows are zero.
    degenerate: Vec<usize>,
    /// Number of rows the regression actually used.
    n_rows: usize,
}

impl ResponsibilityMatrix {
    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn n_factors(&self) -> usize {
        self.entries.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.entries.cols()
    }

    pub fn degenerate_factors(&self) -> &[usize] {
        &self.degenerate
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// CSV with row/column headers, same layout as the conditioned response
    /// matrix: rows are factors, columns latent dimensions.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.latent_dim()).map(|k| format!("z{k}")).collect();
        writeln!(w, "factor,{}", header.join(","))?;
        for c in 0..self.n_factors() {
            let row: Vec<String> = (0..self.latent_dim())
                .map(|k| self.entries[(c, k)].to_string())
                .collect();
            writeln!(w, "y{c},{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Coordinate-descent lasso for `min_w 1/(2n) ||y - Z w||^2 + lambda ||w||_1`.
///
/// Columns of `z` are assumed centered; `y` centered and scaled by the
/// caller. Converges in one sweep for orthogonal designs.
fn lasso(z: &Matrix, y: &[f64], lambda: f64) -> Vec<f64> {
    let n = z.rows();
    let d = z.cols();
    let inv_n = 1.0 / n as f64;
    // Per-column second moments; a zero column keeps its coefficient at zero.
    let col_sq: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| z[(i, j)] * z[(i, j)]).sum::<f64>() * inv_n)
        .collect();

    let mut w = vec![0.0; d];
    let mut residual = y.to_vec();
    for _ in 0..1000 {
        let mut max_delta = 0.0f64;
        for j in 0..d {
            if col_sq[j] == 0.0 {
                continue;
            }
            // rho = 1/n <z_j, residual + w_j z_j>
            let mut rho = 0.0;
            for i in 0..n {
                rho += z[(i, j)] * residual[i];
            }
            rho = rho * inv_n + w[j] * col_sq[j];
            let new_w = if rho > lambda {
                (rho - lambda) / col_sq[j]
            } else if rho < -lambda {
                (rho + lambda) / col_sq[j]
            } else {
                0.0
            };
            let delta = new_w - w[j];
            if delta != 0.0 {
                for i in 0..n {
                    residual[i] -= delta * z[(i, j)];
                }
                w[j] = new_w;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < 1e-10 {
            break;
        }
    }
    w
}

/// Regresses each factor on the posterior means of the encoded observations.
///
/// Observations and factor values are standardized over the sampled rows, so
/// coefficients are comparable across factors and latent dimensions. At most
/// `max_rows` rows enter the regression; larger datasets are subsampled
/// without replacement, deterministically in `seed`.
pub fn responsibility_matrix(
    model: &VaeModel,
    dataset: &Dataset,
    lambda: f64,
    max_rows: usize,
    seed: u64,
) -> Result<ResponsibilityMatrix> {
    let labels = dataset
        .labels()
        .ok_or_else(|| Error::invalid("responsibility matrix needs a labeled dataset"))?;
    if dataset.obs_dim() != model.obs_dim() {
        return Err(Error::shape(format!(
            "dataset has {} dims, model expects {}",
            dataset.obs_dim(),
            model.obs_dim()
        )));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if max_rows < 2 {
        return Err(Error::invalid("need at least 2 rows for a regression"));
    }

    let rows: Vec<usize> = if dataset.len() > max_rows {
        let mut r = rng::seeded(rng::sub_seed(seed, "subsample"));
        let mut picked = index_sample(&mut r, dataset.len(), max_rows).into_vec();
        picked.sort_unstable();
        picked
    } else {
        (0..dataset.len()).collect()
    };
    let n = rows.len();
    if n < 2 {
        return Err(Error::invalid("need at least 2 rows for a regression"));
    }
    let d = model.latent_dim();
    let d_star = dataset.n_factors();

    // Standardized posterior means, one row per sampled observation.
    let means: Vec<Vec<f64>> = rows.iter().map(|&i| model.encode(dataset.row(i)).mean).collect();
    let latent_stats = standardization_stats(&means);
    let mut z = Matrix::zeros(n, d);
    for (i, m) in means.iter().enumerate() {
        for j in 0..d {
            z[(i, j)] = (m[j] - latent_stats.mean[j]) / latent_stats.std[j];
        }
    }

    let mut entries = Matrix::zeros(d_star, d);
    let mut degenerate = Vec::new();
    for c in 0..d_star {
        let raw: Vec<f64> = rows.iter().map(|&i| labels[i][c]).collect();
        let mean = raw.iter().sum::<f64>() / n as f64;
        let var = raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if std < 1e-12 {
            degenerate.push(c);
            continue;
        }
        let y: Vec<f64> = raw.iter().map(|v| (v - mean) / std).collect();
        let w = lasso(&z, &y, lambda);
        for j in 0..d {
            entries[(c, j)] = w[j].abs();
        }
    }
    if !entries.is_finite() {
        return Err(Error::non_finite("responsibility matrix contains non-finite entries"));
    }
    Ok(ResponsibilityMatrix { entries, degenerate, n_rows: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer, Mlp};
    use approx::assert_relative_eq;

    /// Identity embedding of a full 3x3 factor grid: posterior means equal the
    /// standardized factor levels, and the full grid makes the two latent
    /// columns exactly orthogonal.
    fn identity_factor_setup() -> (VaeModel, Dataset) {
        let cards = [3usize, 3];
        let levels: Vec<f64> = {
            let raw = [0.0, 1.0, 2.0];
            let mean = 1.0;
            let std = (2.0f64 / 3.0).sqrt();
            raw.iter().map(|v| (v - mean) / std).collect()
        };
        let mut obs = Vec::new();
        let mut labels = Vec::new();
        for l0 in 0..cards[0] {
            for l1 in 0..cards[1] {
                obs.push(vec![levels[l0], levels[l1]]);
                labels.push(vec![l0 as f64, l1 as f64]);
            }
        }
        let ds = Dataset::new(obs, Some(labels), Some(cards.to_vec())).unwrap();

        let mut enc_w = Matrix::zeros(4, 2);
        enc_w[(0, 0)] = 1.0;
        enc_w[(1, 1)] = 1.0;
        let enc_b = vec![0.0, 0.0, -6.0, -6.0];
        let enc =
            Mlp::from_layers(vec![DenseLayer::new(enc_w, enc_b, Activation::Identity).unwrap()])
                .unwrap();
        let dec = Mlp::from_layers(vec![DenseLayer::new(
            Matrix::identity(2),
            vec![0.0; 2],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        (VaeModel::from_parts(enc, dec, 1.0).unwrap(), ds)
    }

    #[test]
    fn orthogonal_design_soft_thresholds_exactly() {
        let (model, ds) = identity_factor_setup();
        let lambda = 0.01;
        let m = responsibility_matrix(&model, &ds, lambda, 1000, 0).unwrap();
        // Orthogonal standardized regressors: the matched coefficient is the
        // soft-thresholded correlation, 1 - lambda; the other is zero.
        for c in 0..2 {
            for j in 0..2 {
                if c == j {
                    assert_relative_eq!(m.entries()[(c, j)], 1.0 - lambda, epsilon = 1e-10);
                } else {
                    assert_relative_eq!(m.entries()[(c, j)], 0.0, epsilon = 1e-10);
                }
            }
        }
        assert!(m.degenerate_factors().is_empty());
        assert_eq!(m.n_rows(), 9);
    }

    #[test]
    fn heavy_penalty_zeroes_everything() {
        let (model, ds) = identity_factor_setup();
        let m = responsibility_matrix(&model, &ds, 1.5, 1000, 0).unwrap();
        assert!(m.entries().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_factor_is_reported_degenerate() {
        let (model, _) = identity_factor_setup();
        let obs = vec![vec![0.5, -0.5], vec![-1.0, 2.0], vec![0.0, 0.3], vec![1.0, -1.3]];
        let labels = vec![
            vec![0.0, 7.0],
            vec![1.0, 7.0],
            vec![2.0, 7.0],
            vec![3.0, 7.0],
        ];
        let ds = Dataset::new(obs, Some(labels), None).unwrap();
        let m = responsibility_matrix(&model, &ds, 0.01, 1000, 0).unwrap();
        assert_eq!(m.degenerate_factors(), &[1]);
        assert!((0..2).all(|j| m.entries()[(1, j)] == 0.0));
        // The varying factor still gets a nonzero row.
        assert!((0..2).any(|j| m.entries()[(0, j)] > 0.0));
    }

    #[test]
    fn subsampling_is_deterministic_in_the_seed() {
        // An untrained model so that coefficients actually depend on which
        // rows enter the regression (the identity setup recovers 1 - lambda
        // from any subset and would hide a broken subsampler).
        let ds = crate::data::gen_factors(&crate::data::FactorConfig {
            cardinalities: vec![3, 3],
            obs_dim: 3,
            sigma: 0.05,
            embed_seed: 2,
            noise_seed: 2,
        })
        .unwrap();
        let model = VaeModel::new(3, 2, &[8], 0.5, 9).unwrap();
        let a = responsibility_matrix(&model, &ds, 0.01, 5, 42).unwrap();
        let b = responsibility_matrix(&model, &ds, 0.01, 5, 42).unwrap();
        assert_eq!(a.entries().data(), b.entries().data());
        assert_eq!(a.n_rows(), 5);
        let c = responsibility_matrix(&model, &ds, 0.01, 5, 43).unwrap();
        assert_ne!(a.entries().data(), c.entries().data());
    }

    #[test]
    fn validation_rejects_bad_inputs() {
        let (model, ds) = identity_factor_setup();
        assert!(responsibility_matrix(&model, &ds, -0.1, 100, 0).is_err());
        assert!(responsibility_matrix(&model, &ds, f64::NAN, 100, 0).is_err());
        assert!(responsibility_matrix(&model, &ds, 0.01, 1, 0).is_err());
        let unlabeled = Dataset::new(vec![vec![0.0, 0.0]; 4], None, None).unwrap();
        assert!(responsibility_matrix(&model, &unlabeled, 0.01, 100, 0).is_err());
    }

    #[test]
    fn csv_layout_matches_conditioned_matrix() {
        let (model, ds) = identity_factor_setup();
        let m = responsibility_matrix(&model, &ds, 0.01, 1000, 0).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("factor,z0,z1\ny0,"));
    }
}
