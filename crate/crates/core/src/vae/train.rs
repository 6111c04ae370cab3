//! Adam training loop for [`VaeModel`].

use super::{draw_noise, elbo_gradients, VaeModel};
use crate::data::{standardization_stats, Dataset};
use crate::nn::{adam_step, AdamState};
use crate::rng;
use crate::{Error, Result};

use rand::Rng;

/// Training hyperparameters. `beta`, `latent_dim` and `hidden` describe the
/// model being trained; [`train`] writes `beta` into the model so the config
/// fully determines the run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta: f64,
    pub seed: u64,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    /// Standardize observations with the training data's statistics (stored
    /// on the model). Disable only for data that is already well scaled.
    pub standardize: bool,
}

impl Default for TrainConfig {
    /// The double-helix preset: 4 x 32 ELU hidden layers, 2-D latent space,
    /// beta = 0.05, 5000 Adam steps at lr 1e-3, batches of 64.
    fn default() -> Self {
        TrainConfig {
            steps: 5000,
            batch_size: 64,
            lr: 1e-3,
            beta: 0.05,
            seed: 0,
            latent_dim: 2,
            hidden: vec![32, 32, 32, 32],
            standardize: true,
        }
    }
}

/// One row of the training trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Outcome of a training run. If the loss (or a gradient) went non-finite the
/// run stops at that step: `diverged_at` records it, `trace` keeps every
/// finite step, and the model holds the last finite parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub trace: Vec<TraceRow>,
    pub diverged_at: Option<usize>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.trace.last().map(|r| r.loss)
    }
}

/// Builds a fresh model per `config` (dimensions from the dataset) and trains
/// it. Convenience over [`train`].
pub fn train_new(dataset: &Dataset, config: &TrainConfig) -> Result<(VaeModel, TrainReport)> {
    let mut model = VaeModel::new(
        dataset.obs_dim(),
        config.latent_dim,
        &config.hidden,
        config.beta,
        config.seed,
    )?;
    let report = train(&mut model, dataset, config)?;
    Ok((model, report))
}

/// Trains `model` on `dataset` for `config.steps` Adam steps.
///
/// Batches are uniform with replacement from a `batch` seed stream;
/// reparameterization noise comes from a `noise` stream; both are indexed by
/// step, so a run is exactly reproducible from `config.seed` and resuming for
/// zero steps leaves the model untouched.
///
/// `config.beta` overrides the model's beta; if `config.standardize` is set,
/// the dataset's statistics replace the model's normalization before the
/// first step (an exact no-op when resuming on the same dataset).
pub fn train(model: &mut VaeModel, dataset: &Dataset, config: &TrainConfig) -> Result<TrainReport> {
    if dataset.obs_dim() != model.obs_dim() {
        return Err(Error::shape(format!(
            "dataset has {} dims, model expects {}",
            dataset.obs_dim(),
            model.obs_dim()
        )));
    }
    if dataset.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if config.batch_size == 0 {
        return Err(Error::invalid("batch_size must be >= 1"));
    }
    if !config.lr.is_finite() || config.lr <= 0.0 {
        return Err(Error::invalid(format!("learning rate must be finite and > 0, got {}", config.lr)));
    }
    if config.latent_dim != model.latent_dim() {
        return Err(Error::shape(format!(
            "config latent_dim {} does not match model latent_dim {}",
            config.latent_dim,
            model.latent_dim()
        )));
    }
    model.set_beta(config.beta);
    model.set_seed(config.seed);
    if config.standardize {
        let stats = standardization_stats(dataset.observations());
        model.set_normalization(stats.mean, stats.std)?;
    }

    let batch_seed = rng::sub_seed(config.seed, "batch");
    let noise_seed = rng::sub_seed(config.seed, "noise");
    let n = dataset.len();
    let d = model.latent_dim();

    let mut adam = AdamState::new(config.lr, model.num_params());
    let mut trace = Vec::with_capacity(config.steps);
    let mut batch: Vec<Vec<f64>> = Vec::with_capacity(config.batch_size);

    for step in 0..config.steps {
        let mut rb = rng::indexed(batch_seed, step as u64);
        batch.clear();
        batch.extend((0..config.batch_size).map(|_| dataset.row(rb.gen_range(0..n)).to_vec()));
        let noise = draw_noise(d, config.batch_size, &mut rng::indexed(noise_seed, step as u64));

        let step_result = elbo_gradients(model, &batch, &noise).and_then(|(elbo, ge, gd)| {
            let mut grads = ge.flatten();
            grads.extend(gd.flatten());
            let mut params = model.flatten_params();
            adam_step(&mut params, &grads, &mut adam)?;
            model.set_params(&params)?;
            Ok(elbo)
        });
        match step_result {
            Ok(elbo) => trace.push(TraceRow { step, loss: elbo.loss, recon: elbo.recon, kl: elbo.kl }),
            Err(Error::NonFinite(_)) => {
                return Ok(TrainReport { trace, diverged_at: Some(step) });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TrainReport { trace, diverged_at: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_helix, HelixConfig};

    fn tiny_config(steps: usize) -> TrainConfig {
        TrainConfig {
            steps,
            batch_size: 16,
            lr: 1e-2,
            beta: 0.05,
            seed: 3,
            latent_dim: 2,
            hidden: vec![8, 8],
            standardize: true,
        }
    }

    fn tiny_data() -> Dataset {
        gen_helix(&HelixConfig { n: 64, ..HelixConfig::default() }).unwrap()
    }

    #[test]
    fn training_is_bitwise_deterministic_in_seed() {
        let data = tiny_data();
        let cfg = tiny_config(40);
        let (m1, r1) = train_new(&data, &cfg).unwrap();
        let (m2, r2) = train_new(&data, &cfg).unwrap();
        assert_eq!(m1.flatten_params(), m2.flatten_params());
        assert_eq!(r1, r2);

        let (m3, _) = train_new(&data, &TrainConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(m1.flatten_params(), m3.flatten_params());
    }

    #[test]
    fn loss_decreases_on_easy_data() {
        let data = tiny_data();
        let (_, report) = train_new(&data, &tiny_config(300)).unwrap();
        assert!(report.diverged_at.is_none());
        let first: f64 = report.trace[..20].iter().map(|r| r.loss).sum::<f64>() / 20.0;
        let last: f64 = report.trace[280..].iter().map(|r| r.loss).sum::<f64>() / 20.0;
        assert!(last < 0.5 * first, "loss did not drop: {first} -> {last}");
    }

    #[test]
    fn zero_steps_leaves_model_untouched() {
        let data = tiny_data();
        let cfg = tiny_config(30);
        let (mut model, _) = train_new(&data, &cfg).unwrap();
        let before = model.flatten_params();
        let report = train(&mut model, &data, &tiny_config(0)).unwrap();
        assert_eq!(model.flatten_params(), before);
        assert!(report.trace.is_empty());
        assert!(report.diverged_at.is_none());
    }

    #[test]
    fn resume_continues_exactly() {
        // 40 steps in one run == 40 steps via the same seed; resuming is just
        // re-running with the model's weights already advanced, so check the
        // simpler contract: training twice with the same seed and step count
        // from the same initial weights is bitwise identical.
        let data = tiny_data();
        let cfg = tiny_config(25);
        let mut a = VaeModel::new(3, 2, &cfg.hidden, cfg.beta, cfg.seed).unwrap();
        let mut b = a.clone();
        train(&mut a, &data, &cfg).unwrap();
        train(&mut b, &data, &cfg).unwrap();
        assert_eq!(a.flatten_params(), b.flatten_params());
    }

    #[test]
    fn divergence_preserves_partial_trace() {
        let data = tiny_data();
        let cfg = TrainConfig { lr: 1e18, steps: 400, ..tiny_config(400) };
        let (model, report) = train_new(&data, &cfg).unwrap();
        let at = report.diverged_at.expect("lr 1e18 must diverge");
        assert_eq!(report.trace.len(), at, "trace keeps exactly the finite steps");
        assert!(report.trace.iter().all(|r| r.loss.is_finite()));
        assert!(model.flatten_params().iter().all(|p| p.is_finite()),
            "model must hold the last finite parameters");
    }

    #[test]
    fn config_validation() {
        let data = tiny_data();
        assert!(train_new(&data, &TrainConfig { batch_size: 0, ..tiny_config(1) }).is_err());
        assert!(train_new(&data, &TrainConfig { lr: 0.0, ..tiny_config(1) }).is_err());
        let mut model = VaeModel::new(7, 2, &[4], 0.1, 0).unwrap();
        assert!(train(&mut model, &data, &tiny_config(1)).is_err(), "obs_dim mismatch");
    }
}
