//! Randomized invariants over the public API.

use proptest::prelude::*;

use latent_response::data::{read_csv, write_csv, Dataset};
use latent_response::interp::straight_path;
use latent_response::nn::Matrix;
use latent_response::response::{cds, intervene, ConditionedResponseMatrix};
use latent_response::rng;
use latent_response::vae::{elbo_loss, VaeModel};

fn finite_f64() -> impl Strategy<Value = f64> {
    any::<f64>().prop_filter("finite", |v| v.is_finite())
}

fn moderate_f64() -> impl Strategy<Value = f64> {
    -100.0..100.0f64
}

proptest! {
    /// The KL term is non-negative (up to rounding) and the reported loss
    /// decomposes into its parts for any model and batch.
    #[test]
    fn elbo_terms_are_consistent(
        seed in any::<u64>(),
        obs_dim in 1usize..4,
        latent_dim in 1usize..4,
        beta in 0.0..4.0f64,
        batch in prop::collection::vec(prop::collection::vec(-10.0..10.0f64, 3), 1..5),
    ) {
        let obs: Vec<Vec<f64>> = batch.iter().map(|r| r[..obs_dim].to_vec()).collect();
        let model = VaeModel::new(obs_dim, latent_dim, &[6], beta, seed).unwrap();
        let elbo = elbo_loss(&model, &obs, &mut rng::seeded(seed)).unwrap();
        prop_assert!(elbo.kl >= -1e-12, "kl = {}", elbo.kl);
        prop_assert!(elbo.recon >= 0.0);
        prop_assert!(elbo.loss.is_finite());
        let recomposed = elbo.recon + beta * elbo.kl;
        prop_assert!((elbo.loss - recomposed).abs() <= 1e-9 * (1.0 + recomposed.abs()));
    }

    /// The rescaled disentanglement score always lands in [0, 1].
    #[test]
    fn cds_rescaled_is_a_unit_score(
        rows in 2usize..5,
        cols in 1usize..5,
        cells in prop::collection::vec(0.0..10.0f64, 16),
    ) {
        let entries: Vec<Vec<f64>> = (0..rows)
            .map(|c| (0..cols).map(|j| cells[c * cols + j]).collect())
            .collect();
        let matrix = ConditionedResponseMatrix::from_entries(
            Matrix::from_rows(&entries).unwrap(),
        ).unwrap();
        match cds(&matrix) {
            Ok(score) => {
                prop_assert!((0.0..=1.0).contains(&score.rescaled), "rescaled = {}", score.rescaled);
                prop_assert!(score.raw <= 1.0 + 1e-12);
                prop_assert!(!score.retained_columns.is_empty());
            }
            // Only an all-zero matrix is rejected here (rows >= 2 always).
            Err(_) => prop_assert!(entries.iter().flatten().all(|&v| v == 0.0)),
        }
    }

    /// Intervening on one coordinate leaves every other coordinate
    /// bit-identical.
    #[test]
    fn intervention_is_local(
        z in prop::collection::vec(finite_f64(), 1..8),
        dim_pick in any::<prop::sample::Index>(),
        value in finite_f64(),
    ) {
        let dim = dim_pick.index(z.len());
        let out = intervene(&z, dim, value).unwrap();
        prop_assert_eq!(out.len(), z.len());
        prop_assert_eq!(out[dim].to_bits(), value.to_bits());
        for (j, (a, b)) in z.iter().zip(&out).enumerate() {
            if j != dim {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    /// Datasets survive a CSV round-trip bit-exactly, labels included.
    #[test]
    fn dataset_csv_roundtrip_is_exact(
        obs in prop::collection::vec(prop::collection::vec(finite_f64(), 3), 1..6),
        labels in prop::collection::vec(prop::collection::vec(moderate_f64(), 2), 6),
    ) {
        let labels: Vec<Vec<f64>> = labels[..obs.len()].to_vec();
        let ds = Dataset::new(obs, Some(labels), None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        write_csv(&ds, &path).unwrap();
        let back = read_csv(&path).unwrap();
        prop_assert_eq!(back.len(), ds.len());
        for i in 0..ds.len() {
            for (a, b) in ds.row(i).iter().zip(back.row(i)) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        let (la, lb) = (ds.labels().unwrap(), back.labels().unwrap());
        for (ra, rb) in la.iter().zip(lb) {
            for (a, b) in ra.iter().zip(rb) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    /// Straight paths reproduce their endpoints exactly and stay inside the
    /// bounding box of the endpoints.
    #[test]
    fn straight_paths_are_anchored_and_bounded(
        a in prop::collection::vec(moderate_f64(), 1..5),
        b in prop::collection::vec(moderate_f64(), 5),
        n_points in 2usize..9,
    ) {
        let b = b[..a.len()].to_vec();
        let path = straight_path(&a, &b, n_points).unwrap();
        prop_assert_eq!(&path[0], &a);
        prop_assert_eq!(&path[n_points - 1], &b);
        for p in &path {
            for (j, v) in p.iter().enumerate() {
                let (lo, hi) = (a[j].min(b[j]), a[j].max(b[j]));
                prop_assert!((lo - 1e-9..=hi + 1e-9).contains(v));
            }
        }
    }
}
