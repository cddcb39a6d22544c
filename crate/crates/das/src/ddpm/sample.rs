//! Deterministic DDIM sampling on an evenly spaced timestep subsequence.

use crate::ddpm::model::NoisePredictor;
use crate::ddpm::schedule::DiffusionSchedule;
use crate::error::Result;
use crate::features::timestep_grid;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct SampleTrajectory {
    /// Visited (t, x_t) pairs in descending t order, including the seeded x_T.
    pub latents: Vec<(usize, Vec<f64>)>,
    pub sample: Vec<f64>,
}

/// Draw x_T from the seeded Gaussian and apply the deterministic DDIM update
/// along the evenly spaced subsequence. The same seed and model always
/// produce the same output.
pub fn sample_with_trajectory(
    model: &NoisePredictor,
    schedule: &DiffusionSchedule,
    num_steps: usize,
    seed: u64,
) -> Result<SampleTrajectory> {
    let d = model.input_dim();
    let grid = timestep_grid(schedule.num_timesteps, num_steps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut latents = Vec::with_capacity(num_steps);
    for i in (0..grid.len()).rev() {
        let t = grid[i];
        latents.push((t, x.clone()));
        let eps_hat = model.forward(&x, t)?;
        let ab_t = schedule.alpha_bar(t);
        let ab_prev = if i == 0 { 1.0 } else { schedule.alpha_bar(grid[i - 1]) };
        let x0_pred: Vec<f64> = x
            .iter()
            .zip(&eps_hat)
            .map(|(xt, e)| (xt - (1.0 - ab_t).sqrt() * e) / ab_t.sqrt())
            .collect();
        x = x0_pred
            .iter()
            .zip(&eps_hat)
            .map(|(x0, e)| ab_prev.sqrt() * x0 + (1.0 - ab_prev).sqrt() * e)
            .collect();
    }
    Ok(SampleTrajectory { latents, sample: x })
}

pub fn sample(
    model: &NoisePredictor,
    schedule: &DiffusionSchedule,
    num_steps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(sample_with_trajectory(model, schedule, num_steps, seed)?.sample)
}
