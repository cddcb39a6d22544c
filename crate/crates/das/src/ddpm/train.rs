//! Mini-batch SGD with decoupled weight decay on the simple loss.
//! Training is single-threaded and fully determined by the seed.

use crate::ddpm::data::DataPoint;
use crate::ddpm::model::NoisePredictor;
use crate::ddpm::schedule::{make_linear_schedule, DiffusionSchedule};
use crate::error::{DasError, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub num_timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub hidden: Vec<usize>,
    /// Number of evenly spaced checkpoints to keep (0 = none).
    pub checkpoints: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.learning_rate <= 0.0 || self.num_timesteps == 0 {
            return Err(DasError::Parameter(
                "batch size, learning rate and T must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        make_linear_schedule(self.num_timesteps, self.beta_start, self.beta_end)
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 32,
            learning_rate: 0.02,
            weight_decay: 1e-6,
            seed: 0,
            num_timesteps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            hidden: vec![32, 32],
            checkpoints: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub model: NoisePredictor,
    /// Evenly spaced snapshots along the trajectory (for TracInCP/GAS).
    pub checkpoints: Vec<NoisePredictor>,
}

/// Deterministic initialization for a given seed; shared by all retraining
/// runs so subset models start from the base model's parameters.
pub fn init_model(d: usize, config: &TrainConfig) -> NoisePredictor {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x1157_0000);
    NoisePredictor::init(d, &config.hidden, d, &mut rng)
}

/// FNV-1a over the sample bytes; keys each sample's noise stream to its
/// content so that retraining with samples removed leaves the surviving
/// samples' (t, eps) draws unchanged. Without this, leave-one-out and subset
/// retraining distances are dominated by reshuffled noise rather than by the
/// removed samples.
fn content_key(point: &DataPoint) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in &point.features {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

pub fn train(dataset: &[DataPoint], config: &TrainConfig) -> Result<TrainResult> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(DasError::Parameter("empty training set".into()));
    }
    let d = dataset[0].features.len();
    let schedule = config.schedule()?;
    let mut model = init_model(d, config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let keys: Vec<u64> = dataset.iter().map(|p| config.seed ^ content_key(p)).collect();
    let n = dataset.len();
    let p = model.num_params();
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad_acc = vec![0.0; p];
    let total_steps = config.epochs * n.div_ceil(config.batch_size);
    let mut step = 0usize;
    let mut checkpoints = Vec::new();
    let ckpt_every = if config.checkpoints > 0 {
        (config.epochs.max(1)).div_ceil(config.checkpoints)
    } else {
        usize::MAX
    };
    let _ = total_steps;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grad_acc.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for &idx in batch {
                let x0 = &dataset[idx].features;
                let mut srng = ChaCha8Rng::seed_from_u64(keys[idx]);
                srng.set_stream(epoch as u64);
                let t = srng.gen_range(1..=schedule.num_timesteps);
                let eps: Vec<f64> =
                    (0..d).map(|_| srng.sample::<f64, _>(StandardNormal)).collect();
                batch_loss += model.simple_loss(x0, t, &eps, &schedule)?;
                let g = model.loss_gradient(x0, t, &eps, &schedule)?;
                for (acc, gi) in grad_acc.iter_mut().zip(&g) {
                    *acc += gi;
                }
            }
            if !batch_loss.is_finite() {
                return Err(DasError::Diverged { step });
            }
            let scale = config.learning_rate / batch.len() as f64;
            let wd = config.learning_rate * config.weight_decay;
            for (theta, g) in model.params.iter_mut().zip(&grad_acc) {
                *theta -= scale * g + wd * *theta;
            }
            step += 1;
        }
        if config.checkpoints > 0 && (epoch + 1) % ckpt_every == 0 {
            checkpoints.push(model.clone());
        }
    }
    if config.checkpoints > 0 && checkpoints.last() != Some(&model) {
        checkpoints.push(model.clone());
    }
    Ok(TrainResult { model, checkpoints })
}

/// Mean simple loss over the dataset under a frozen (t, eps) protocol.
/// Used for before/after comparisons in tests.
pub fn mean_loss(
    model: &NoisePredictor,
    dataset: &[DataPoint],
    schedule: &DiffusionSchedule,
    seed: u64,
) -> Result<f64> {
    let d = dataset[0].features.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for p in dataset {
        let t = rng.gen_range(1..=schedule.num_timesteps);
        let eps: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        acc += model.simple_loss(&p.features, t, &eps, schedule)?;
    }
    Ok(acc / dataset.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddpm::data::gen_gauss2;

    fn quick_config() -> TrainConfig {
        TrainConfig {
            epochs: 40,
            num_timesteps: 100,
            hidden: vec![16, 16],
            seed: 7,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_deterministic() {
        let data = gen_gauss2(40, 1);
        let cfg = quick_config();
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a.model.params, b.model.params);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let data = gen_gauss2(10, 1);
        let cfg = TrainConfig { epochs: 0, ..quick_config() };
        let r = train(&data, &cfg).unwrap();
        assert_eq!(r.model, init_model(2, &cfg));
    }

    #[test]
    fn loss_decreases_on_toy_set() {
        let data = gen_gauss2(60, 2);
        let cfg = quick_config();
        let schedule = cfg.schedule().unwrap();
        let untrained = init_model(2, &cfg);
        let before = mean_loss(&untrained, &data, &schedule, 99).unwrap();
        let trained = train(&data, &cfg).unwrap().model;
        let after = mean_loss(&trained, &data, &schedule, 99).unwrap();
        assert!(after < before, "after {after} not below before {before}");
    }

    #[test]
    fn checkpoints_evenly_spaced() {
        let data = gen_gauss2(20, 3);
        let cfg = TrainConfig { checkpoints: 4, ..quick_config() };
        let r = train(&data, &cfg).unwrap();
        assert_eq!(r.checkpoints.len(), 4);
        assert_eq!(r.checkpoints.last().unwrap().params, r.model.params);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(train(&[], &quick_config()).is_err());
    }
}
