//! Monte-Carlo response matrices and the causal disentanglement score.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::{intervene, latent_response};
use crate::data::Dataset;
use crate::nn::Matrix;
use crate::rng;
use crate::vae::VaeModel;
use crate::{Error, Result};

/// Where intervention values come from in [`response_matrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterventionSource {
    /// `z̃_j ~ N(0, 1)` (the latent prior marginal).
    Prior,
    /// `z̃_j` is coordinate `j` of a posterior draw for a random dataset row
    /// (the aggregate posterior marginal).
    AggregatePosterior,
}

impl InterventionSource {
    pub fn name(self) -> &'static str {
        match self {
            InterventionSource::Prior => "prior",
            InterventionSource::AggregatePosterior => "aggregate-posterior",
        }
    }
}

/// The latent response matrix: entry `(j, k)` is
/// `sqrt( 1/2 E[ (h_k(z with z_j replaced) - h_k(z))^2 ] )` over base draws
/// `z ~ N(0, I)` and interventions from the configured source.
///
/// Diagonal entries near 1 mark informative, recoverable dimensions; an
/// all-zero column `j` means interventions on `z_j` never move the response —
/// the signature of a collapsed dimension.
#[derive(Debug, Clone)]
pub struct ResponseMatrix {
    entries: Matrix,
    n_samples: usize,
    source: InterventionSource,
    seed: u64,
}

impl ResponseMatrix {
    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.rows()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn source(&self) -> InterventionSource {
        self.source
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// CSV with row/column headers: rows are the intervened dimension, columns
    /// the responding dimension.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.dim();
        let header: Vec<String> = (0..d).map(|k| format!("z{k}")).collect();
        writeln!(w, "intervened,{}", header.join(","))?;
        for j in 0..d {
            let row: Vec<String> = (0..d).map(|k| self.entries[(j, k)].to_string()).collect();
            writeln!(w, "z{j},{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Estimates the response matrix with `n_samples` Monte-Carlo draws.
///
/// Draw `i` uses the `i`-th counter-indexed stream under `seed`, so estimates
/// are independent of evaluation order and draw `i` never changes when
/// `n_samples` grows. `AggregatePosterior` requires a dataset whose dimension
/// matches the model.
pub fn response_matrix(
    model: &VaeModel,
    n_samples: usize,
    source: InterventionSource,
    dataset: Option<&Dataset>,
    seed: u64,
) -> Result<ResponseMatrix> {
    if n_samples == 0 {
        return Err(Error::invalid("need at least one Monte-Carlo sample"));
    }
    let d = model.latent_dim();

    // Posterior parameters for every dataset row, precomputed once.
    let posteriors: Option<Vec<(Vec<f64>, Vec<f64>)>> = match source {
        InterventionSource::Prior => None,
        InterventionSource::AggregatePosterior => {
            let data = dataset.ok_or_else(|| {
                Error::invalid("aggregate-posterior interventions need a dataset")
            })?;
            if data.is_empty() {
                return Err(Error::invalid("aggregate-posterior interventions need a non-empty dataset"));
            }
            if data.obs_dim() != model.obs_dim() {
                return Err(Error::shape(format!(
                    "dataset has {} dims, model expects {}",
                    data.obs_dim(),
                    model.obs_dim()
                )));
            }
            Some(
                data.observations()
                    .iter()
                    .map(|x| {
                        let p = model.encode(x);
                        let s = p.sigma();
                        (p.mean, s)
                    })
                    .collect(),
            )
        }
    };

    let stream = rng::sub_seed(seed, "mc");
    let mut acc = Matrix::zeros(d, d);
    for i in 0..n_samples {
        let mut r = rng::indexed(stream, i as u64);
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut r)).collect();
        let h_z = latent_response(model, &z);
        for j in 0..d {
            let value = match &posteriors {
                None => StandardNormal.sample(&mut r),
                Some(posts) => {
                    let row = r.gen_range(0..posts.len());
                    let (mean, sigma) = &posts[row];
                    let e: f64 = StandardNormal.sample(&mut r);
                    mean[j] + sigma[j] * e
                }
            };
            let h_int = latent_response(model, &intervene(&z, j, value)?);
            for k in 0..d {
                let diff = h_int[k] - h_z[k];
                acc[(j, k)] += diff * diff;
            }
        }
    }

    let scale = 1.0 / (2.0 * n_samples as f64);
    let mut entries = Matrix::zeros(d, d);
    for j in 0..d {
        for k in 0..d {
            entries[(j, k)] = (acc[(j, k)] * scale).sqrt();
        }
    }
    if !entries.is_finite() {
        return Err(Error::non_finite("response matrix contains non-finite entries"));
    }
    Ok(ResponseMatrix { entries, n_samples, source, seed })
}

/// The conditioned response matrix: rows are factors, columns are latent
/// dimensions. Entry `(c, j)` is
/// `sqrt( 1/2 E[ (h_j(z with z_j replaced) - h_j(z))^2 ] )` where both the
/// base `z` and the intervention value are posterior draws from the same
/// stratum of observations whose labels agree on every factor except `c`.
///
/// Interventions on `z_j` inside such a stratum can only change factor `c`;
/// the entry is large exactly when dimension `j` carries factor `c`, and an
/// all-zero column marks a collapsed dimension.
#[derive(Debug, Clone)]
pub struct ConditionedResponseMatrix {
    entries: Matrix,
    /// Per-factor number of Monte-Carlo draws behind each cell of that row.
    sample_counts: Vec<usize>,
    /// Per-factor stratum counts.
    strata_counts: Vec<usize>,
    seed: u64,
}

impl ConditionedResponseMatrix {
    /// Wraps explicit entries (rows = factors, columns = latent dimensions),
    /// e.g. synthetic matrices for score calibration. Entries must be finite
    /// and non-negative.
    pub fn from_entries(entries: Matrix) -> Result<Self> {
        if entries.data().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("matrix entries must be finite and non-negative"));
        }
        let rows = entries.rows();
        Ok(ConditionedResponseMatrix {
            entries,
            sample_counts: vec![0; rows],
            strata_counts: vec![0; rows],
            seed: 0,
        })
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn n_factors(&self) -> usize {
        self.entries.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.entries.cols()
    }

    pub fn sample_counts(&self) -> &[usize] {
        &self.sample_counts
    }

    pub fn strata_counts(&self) -> &[usize] {
        &self.strata_counts
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// CSV with row/column headers: rows are factors, columns latent dims.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
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

/// Estimates the conditioned response matrix.
///
/// `n_samples` is the per-cell budget: it is split evenly across the strata
/// of each factor (at least one draw per stratum). Strata are enumerated from
/// the observed label combinations; by construction every stratum holds at
/// least one row.
pub fn conditioned_response_matrix(
    model: &VaeModel,
    dataset: &Dataset,
    n_samples: usize,
    seed: u64,
) -> Result<ConditionedResponseMatrix> {
    let labels = dataset
        .labels()
        .ok_or_else(|| Error::invalid("conditioned response matrix needs a labeled dataset"))?;
    if dataset.is_empty() {
        return Err(Error::invalid("conditioned response matrix needs a non-empty dataset"));
    }
    if dataset.obs_dim() != model.obs_dim() {
        return Err(Error::shape(format!(
            "dataset has {} dims, model expects {}",
            dataset.obs_dim(),
            model.obs_dim()
        )));
    }
    if n_samples == 0 {
        return Err(Error::invalid("need at least one Monte-Carlo sample per cell"));
    }
    let d = model.latent_dim();
    let d_star = dataset.n_factors();

    let posteriors: Vec<(Vec<f64>, Vec<f64>)> = dataset
        .observations()
        .iter()
        .map(|x| {
            let p = model.encode(x);
            let s = p.sigma();
            (p.mean, s)
        })
        .collect();

    let mut entries = Matrix::zeros(d_star, d);
    let mut sample_counts = vec![0usize; d_star];
    let mut strata_counts = vec![0usize; d_star];

    for c in 0..d_star {
        // Group rows by their labels with factor c removed. Keys use the bit
        // patterns of the label values: exact and deterministically ordered.
        let mut strata: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
        for (i, row_labels) in labels.iter().enumerate() {
            let key: Vec<u64> = row_labels
                .iter()
                .enumerate()
                .filter(|(f, _)| *f != c)
                .map(|(_, v)| v.to_bits())
                .collect();
            strata.entry(key).or_default().push(i);
        }
        let n_strata = strata.len();
        let per_stratum = (n_samples / n_strata).max(1);
        strata_counts[c] = n_strata;
        sample_counts[c] = per_stratum * n_strata;

        for j in 0..d {
            let cell_stream = rng::sub_seed(seed, &format!("cond-c{c}-j{j}"));
            let mut acc = 0.0;
            for (si, rows) in strata.values().enumerate() {
                for rep in 0..per_stratum {
                    let mut r = rng::indexed(cell_stream, (si * per_stratum + rep) as u64);
                    let row_a = rows[r.gen_range(0..rows.len())];
                    let row_b = rows[r.gen_range(0..rows.len())];
                    let (mean_a, sigma_a) = &posteriors[row_a];
                    let z: Vec<f64> = (0..d)
                        .map(|k| {
                            let e: f64 = StandardNormal.sample(&mut r);
                            mean_a[k] + sigma_a[k] * e
                        })
                        .collect();
                    let (mean_b, sigma_b) = &posteriors[row_b];
                    let e: f64 = StandardNormal.sample(&mut r);
                    let value = mean_b[j] + sigma_b[j] * e;

                    let h_z = latent_response(model, &z);
                    let h_int = latent_response(model, &intervene(&z, j, value)?);
                    let diff = h_int[j] - h_z[j];
                    acc += diff * diff;
                }
            }
            entries[(c, j)] = (acc / (2.0 * sample_counts[c] as f64)).sqrt();
        }
    }
    if !entries.is_finite() {
        return Err(Error::non_finite("conditioned response matrix contains non-finite entries"));
    }
    Ok(ConditionedResponseMatrix { entries, sample_counts, strata_counts, seed })
}

/// The causal disentanglement score of a conditioned response matrix.
#[derive(Debug, Clone, Serialize)]
pub struct CdsScore {
    /// `sum_j max_c M[c][j] / sum_cj M[c][j]` over retained columns;
    /// lies in `[1/d*, 1]`.
    pub raw: f64,
    /// `raw` affinely rescaled to `[0, 1]`.
    pub rescaled: f64,
    /// Columns that entered the score (all-zero columns are dropped).
    pub retained_columns: Vec<usize>,
}

/// Computes the causal disentanglement score.
///
/// Columns whose entries are all zero (collapsed dimensions: interventions on
/// them never produce a response) are excluded. Errors if the matrix has
/// fewer than two factor rows or every column is zero.
pub fn cds(matrix: &ConditionedResponseMatrix) -> Result<CdsScore> {
    let m = matrix.entries();
    let d_star = m.rows();
    if d_star < 2 {
        return Err(Error::invalid(format!(
            "score needs at least 2 factors, matrix has {d_star} row(s)"
        )));
    }
    let retained_columns: Vec<usize> = (0..m.cols())
        .filter(|&j| (0..d_star).any(|c| m[(c, j)] != 0.0))
        .collect();
    if retained_columns.is_empty() {
        return Err(Error::invalid("all matrix columns are zero, score undefined"));
    }
    let mut sum_max = 0.0;
    let mut sum_all = 0.0;
    for &j in &retained_columns {
        let mut col_max = 0.0f64;
        for c in 0..d_star {
            let v = m[(c, j)];
            col_max = col_max.max(v);
            sum_all += v;
        }
        sum_max += col_max;
    }
    let raw = sum_max / sum_all;
    // raw >= 1/d* analytically (a column's max is at least its average); the
    // clamp only absorbs round-off.
    let rescaled = ((raw - 1.0 / d_star as f64) / (1.0 - 1.0 / d_star as f64)).clamp(0.0, 1.0);
    Ok(CdsScore { raw, rescaled, retained_columns })
}

#[cfg(test)]
mod tests {
    use super::super::test_models::{constant_decoder_model, identity_model};
    use super::*;
    use crate::data::{gen_factors, FactorConfig};
    use approx::assert_relative_eq;

    #[test]
    fn identity_model_response_matrix_is_near_identity() {
        // h = id: off-diagonals are exactly zero (an intervention on z_j moves
        // only h_j); diagonals estimate sqrt(E[(z̃-z)^2]/2) = 1.
        let model = identity_model(2, 0.0);
        let m = response_matrix(&model, 4000, InterventionSource::Prior, None, 11).unwrap();
        for j in 0..2 {
            for k in 0..2 {
                if j == k {
                    assert_relative_eq!(m.entries()[(j, k)], 1.0, max_relative = 0.05);
                } else {
                    assert_eq!(m.entries()[(j, k)], 0.0);
                }
            }
        }
    }

    #[test]
    fn constant_decoder_response_matrix_is_exactly_zero() {
        let model = constant_decoder_model(2, 3);
        let m = response_matrix(&model, 200, InterventionSource::Prior, None, 5).unwrap();
        assert!(m.entries().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn response_matrix_is_deterministic_and_seed_sensitive() {
        let model = identity_model(2, 0.0);
        let a = response_matrix(&model, 300, InterventionSource::Prior, None, 1).unwrap();
        let b = response_matrix(&model, 300, InterventionSource::Prior, None, 1).unwrap();
        assert_eq!(a.entries().data(), b.entries().data());
        let c = response_matrix(&model, 300, InterventionSource::Prior, None, 2).unwrap();
        assert_ne!(a.entries().data(), c.entries().data());
    }

    #[test]
    fn aggregate_posterior_source_needs_and_uses_a_dataset() {
        let model = identity_model(2, -6.0);
        assert!(response_matrix(&model, 10, InterventionSource::AggregatePosterior, None, 0).is_err());

        // Dataset concentrated at a single point far from the prior: with
        // sigma ≈ 0 the intervention values are ≈ that point's coordinates,
        // which shrinks diagonal entries relative to prior interventions
        // whenever the point sits inside the prior's bulk.
        let ds = crate::data::Dataset::new(vec![vec![0.0, 0.0]; 16], None, None).unwrap();
        let agg =
            response_matrix(&model, 2000, InterventionSource::AggregatePosterior, Some(&ds), 3)
                .unwrap();
        // h = id and z̃_j ≈ 0: M_jj = sqrt(E[z_j^2]/2) = sqrt(1/2).
        for j in 0..2 {
            assert_relative_eq!(agg.entries()[(j, j)], (0.5f64).sqrt(), max_relative = 0.06);
        }
    }

    #[test]
    fn matrix_csv_has_headers_and_roundtrippable_values() {
        let model = identity_model(2, 0.0);
        let m = response_matrix(&model, 50, InterventionSource::Prior, None, 0).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("intervened,z0,z1"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "z0");
        let parsed: f64 = row[1].parse().unwrap();
        assert_eq!(parsed, m.entries()[(0, 0)], "shortest round-trip formatting");
    }

    fn linear_factor_setup() -> (crate::vae::VaeModel, Dataset) {
        // Observations are an orthonormal linear embedding of standardized
        // factor levels; encoder mean inverts it exactly, so latent j carries
        // factor j and nothing else.
        use crate::nn::{Activation, DenseLayer, Mlp};
        let cards = [3usize, 4];
        let d_star = 2;
        // Orthonormal columns in R^3.
        let e = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 0.0],
        ])
        .unwrap();

        let mut level_values: Vec<Vec<f64>> = Vec::new();
        for &card in &cards {
            let raw: Vec<f64> = (0..card).map(|l| l as f64).collect();
            let mean = raw.iter().sum::<f64>() / card as f64;
            let var = raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / card as f64;
            let std = var.sqrt();
            level_values.push(raw.iter().map(|v| (v - mean) / std).collect());
        }

        let mut obs = Vec::new();
        let mut labels = Vec::new();
        for l0 in 0..cards[0] {
            for l1 in 0..cards[1] {
                let y = vec![level_values[0][l0], level_values[1][l1]];
                obs.push(e.matvec(&y));
                labels.push(vec![l0 as f64, l1 as f64]);
            }
        }
        let ds = Dataset::new(obs, Some(labels), Some(cards.to_vec())).unwrap();

        // Encoder: mean = E^T x, log_sigma = -6.
        let mut enc_w = Matrix::zeros(2 * d_star, 3);
        for j in 0..d_star {
            for i in 0..3 {
                enc_w[(j, i)] = e[(i, j)];
            }
        }
        let mut enc_b = vec![0.0; 2 * d_star];
        for b in enc_b.iter_mut().skip(d_star) {
            *b = -6.0;
        }
        let enc = Mlp::from_layers(vec![DenseLayer::new(enc_w, enc_b, Activation::Identity).unwrap()]).unwrap();
        let dec = Mlp::from_layers(vec![DenseLayer::new(e, vec![0.0; 3], Activation::Identity).unwrap()]).unwrap();
        let model = crate::vae::VaeModel::from_parts(enc, dec, 1.0).unwrap();
        (model, ds)
    }

    #[test]
    fn disentangled_linear_model_gives_diagonal_conditioned_matrix() {
        let (model, ds) = linear_factor_setup();
        let m = conditioned_response_matrix(&model, &ds, 400, 13).unwrap();
        // Matched cells estimate sqrt(E[(v - v')^2]/2) = sqrt(Var(levels)) = 1
        // (levels are standardized); off-cells only see posterior noise e^-6.
        for c in 0..2 {
            for j in 0..2 {
                let v = m.entries()[(c, j)];
                if c == j {
                    assert!((0.7..1.3).contains(&v), "diagonal cell ({c},{j}) = {v}");
                } else {
                    assert!(v < 0.05, "off cell ({c},{j}) = {v}");
                }
            }
        }
        let score = cds(&m).unwrap();
        assert!(score.rescaled > 0.9, "rescaled CDS = {}", score.rescaled);

        // Bookkeeping: factor 0 strata = levels of factor 1, and vice versa.
        assert_eq!(m.strata_counts(), &[4, 3]);
        assert_eq!(m.sample_counts(), &[400, 399]);
    }

    #[test]
    fn collapsed_dimension_yields_a_zero_column() {
        // Extend the decoder with a third latent input that it ignores.
        use crate::nn::{Activation, DenseLayer, Mlp};
        let (_, ds) = linear_factor_setup();
        let e3 = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        let mut enc_w = Matrix::zeros(6, 3);
        enc_w[(0, 0)] = 1.0;
        enc_w[(1, 1)] = 1.0;
        // latent 2 reads nothing: posterior mean fixed at 0.
        let mut enc_b = vec![0.0; 6];
        for b in enc_b.iter_mut().skip(3) {
            *b = -6.0;
        }
        let enc = Mlp::from_layers(vec![DenseLayer::new(enc_w, enc_b, Activation::Identity).unwrap()]).unwrap();
        let dec = Mlp::from_layers(vec![DenseLayer::new(e3, vec![0.0; 3], Activation::Identity).unwrap()]).unwrap();
        let model = crate::vae::VaeModel::from_parts(enc, dec, 1.0).unwrap();

        let m = conditioned_response_matrix(&model, &ds, 200, 3).unwrap();
        for c in 0..2 {
            assert_eq!(m.entries()[(c, 2)], 0.0, "collapsed column must be exactly zero");
        }
        let score = cds(&m).unwrap();
        assert_eq!(score.retained_columns, vec![0, 1]);
    }

    #[test]
    fn conditioned_matrix_on_generated_factors_is_deterministic() {
        let ds = gen_factors(&FactorConfig {
            cardinalities: vec![3, 3],
            obs_dim: 4,
            sigma: 0.02,
            embed_seed: 1,
            noise_seed: 1,
        })
        .unwrap();
        let model = crate::vae::VaeModel::new(4, 3, &[8], 0.5, 7).unwrap();
        let a = conditioned_response_matrix(&model, &ds, 60, 5).unwrap();
        let b = conditioned_response_matrix(&model, &ds, 60, 5).unwrap();
        assert_eq!(a.entries().data(), b.entries().data());
    }

    #[test]
    fn conditioned_matrix_requires_labels() {
        let ds = crate::data::Dataset::new(vec![vec![0.0, 1.0]; 4], None, None).unwrap();
        let model = identity_model(2, 0.0);
        assert!(conditioned_response_matrix(&model, &ds, 10, 0).is_err());
    }

    #[test]
    fn cds_is_exact_on_synthetic_matrices() {
        // One-hot columns: score exactly 1 (raw and rescaled).
        let one_hot = ConditionedResponseMatrix::from_entries(
            Matrix::from_rows(&[
                vec![0.9, 0.0, 0.0],
                vec![0.0, 0.4, 0.0],
                vec![0.0, 0.0, 1.7],
            ])
            .unwrap(),
        )
        .unwrap();
        let s = cds(&one_hot).unwrap();
        assert_eq!(s.raw, 1.0);
        assert_eq!(s.rescaled, 1.0);

        // Uniform matrix: raw = 1/d*, rescaled exactly 0. Entries are a power
        // of two so the sums (and hence the score) carry no round-off.
        let uniform = ConditionedResponseMatrix::from_entries(
            Matrix::from_rows(&[vec![0.25; 4], vec![0.25; 4], vec![0.25; 4]]).unwrap(),
        )
        .unwrap();
        let s = cds(&uniform).unwrap();
        assert_eq!(s.raw, 1.0 / 3.0);
        assert_eq!(s.rescaled, 0.0);

        // A zero column is dropped and does not dilute the score.
        let with_dead = ConditionedResponseMatrix::from_entries(
            Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap(),
        )
        .unwrap();
        let s = cds(&with_dead).unwrap();
        assert_eq!(s.raw, 1.0);
        assert_eq!(s.retained_columns, vec![0, 1]);
    }

    #[test]
    fn cds_rejects_degenerate_matrices() {
        let zero = ConditionedResponseMatrix::from_entries(Matrix::zeros(2, 3)).unwrap();
        assert!(cds(&zero).is_err());
        let one_factor = ConditionedResponseMatrix::from_entries(Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap()).unwrap();
        assert!(cds(&one_factor).is_err());
        assert!(ConditionedResponseMatrix::from_entries(
            Matrix::from_rows(&[vec![-0.1, 0.0]]).unwrap()
        )
        .is_err());
    }
}
