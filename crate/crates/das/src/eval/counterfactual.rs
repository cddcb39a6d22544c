//! Retraining-based evaluations: top-k removal with regeneration distance,
//! and the output-function comparison (which per-step signal tracks visible
//! sample change better, noise-predictor outputs or losses).

use super::stats::{mean, pearson};
use crate::attribution::{cosine, lookup, AttributionContext, ScoringConfig, Target};
use crate::ddpm::{
    sample_with_trajectory, train, DataPoint, DiffusionSchedule, NoisePredictor, TrainConfig,
};
use crate::error::{DasError, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct CounterfactualReport {
    pub method: String,
    pub per_target_l2: Vec<f64>,
    pub mean_l2: f64,
    pub mean_cosine: f64,
}

#[derive(Debug, Clone)]
pub struct CounterfactualConfig {
    pub top_k: usize,
    /// (target id, generation seed) pairs; regeneration reuses the same seed.
    pub gen_seeds: Vec<u64>,
    pub num_steps: usize,
    pub train_cfg: TrainConfig,
    pub scoring: ScoringConfig,
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn retrain_without(
    dataset: &[DataPoint],
    remove: &[usize],
    cfg: &TrainConfig,
) -> Result<NoisePredictor> {
    let mut drop = vec![false; dataset.len()];
    for &i in remove {
        drop[i] = true;
    }
    let reduced: Vec<DataPoint> = dataset
        .iter()
        .zip(&drop)
        .filter(|(_, &d)| !d)
        .map(|(p, _)| p.clone())
        .collect();
    Ok(train(&reduced, cfg)?.model)
}

/// For each method: per generated target, remove that target's top-k-scored
/// training samples, retrain from the same seeded initialization, regenerate
/// from the original sampling seed, and measure how far the sample moved.
/// "random" in the method list removes a seeded random subset instead.
pub fn run_counterfactual(
    dataset: &[DataPoint],
    base_model: &NoisePredictor,
    checkpoints: &[NoisePredictor],
    schedule: &DiffusionSchedule,
    methods: &[&str],
    cfg: &CounterfactualConfig,
) -> Result<Vec<CounterfactualReport>> {
    if cfg.top_k >= dataset.len() {
        return Err(DasError::Parameter(format!(
            "top_k {} must be below the training set size {}",
            cfg.top_k,
            dataset.len()
        )));
    }
    let train_x0: Vec<Vec<f64>> = dataset.iter().map(|p| p.features.clone()).collect();
    let ctx = AttributionContext::new(
        base_model,
        checkpoints,
        schedule,
        &train_x0,
        cfg.scoring.clone(),
    )?;
    let targets: Result<Vec<Target>> = cfg
        .gen_seeds
        .iter()
        .enumerate()
        .map(|(i, &seed)| {
            Target::generate(i as u64, base_model, schedule, cfg.num_steps, seed)
        })
        .collect();
    let targets = targets?;
    let mut reports = Vec::with_capacity(methods.len());
    for &name in methods {
        let removal_sets: Result<Vec<Vec<usize>>> = if name == "random" {
            targets
                .iter()
                .map(|t| {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(cfg.scoring.noise_seed ^ (t.id << 8));
                    let mut idx: Vec<usize> = (0..dataset.len()).collect();
                    idx.shuffle(&mut rng);
                    idx.truncate(cfg.top_k);
                    Ok(idx)
                })
                .collect()
        } else {
            let strategy = lookup(name)?;
            targets
                .iter()
                .map(|t| Ok(strategy.score(&ctx, t)?.top_k(cfg.top_k)))
                .collect()
        };
        let removal_sets = removal_sets?;
        let per: Result<Vec<(f64, f64)>> = targets
            .par_iter()
            .zip(&removal_sets)
            .map(|(target, remove)| {
                let model = retrain_without(dataset, remove, &cfg.train_cfg)?;
                let regen = sample_with_trajectory(
                    &model,
                    schedule,
                    cfg.num_steps,
                    cfg.gen_seeds[target.id as usize],
                )?;
                Ok((l2(&target.x0, &regen.sample), cosine(&target.x0, &regen.sample)))
            })
            .collect();
        let per = per?;
        let per_target_l2: Vec<f64> = per.iter().map(|(d, _)| *d).collect();
        let cosines: Vec<f64> = per.iter().map(|(_, c)| *c).collect();
        reports.push(CounterfactualReport {
            method: name.to_string(),
            mean_l2: mean(&per_target_l2),
            mean_cosine: mean(&cosines),
            per_target_l2,
        });
    }
    Ok(reports)
}

#[derive(Debug, Clone)]
pub struct OutputFnReport {
    pub pearson_output_diff: f64,
    pub pearson_loss_diff: f64,
    pub pairs: usize,
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct OutputFnConfig {
    pub num_pairs: usize,
    /// Fraction of the training set removed per pair (0 = degenerate control).
    pub removal_fraction: f64,
    pub num_steps: usize,
    pub train_cfg: TrainConfig,
    pub seed: u64,
}

/// For N retrained models (each missing a random subset): regenerate the same
/// sample from both models, then correlate the visible L2 change with (a) the
/// mean per-step noise-predictor output difference and (b) the mean per-step
/// loss difference along the shared base trajectory.
pub fn run_output_function_experiment(
    dataset: &[DataPoint],
    base_model: &NoisePredictor,
    schedule: &DiffusionSchedule,
    cfg: &OutputFnConfig,
) -> Result<OutputFnReport> {
    let n = dataset.len();
    let remove_k = (cfg.removal_fraction * n as f64).round() as usize;
    let per_pair: Result<Vec<(f64, f64, f64)>> = (0..cfg.num_pairs)
        .into_par_iter()
        .map(|pair| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(pair as u64 + 1);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            idx.truncate(remove_k);
            let retrained = retrain_without(dataset, &idx, &cfg.train_cfg)?;
            let gen_seed = cfg.seed ^ (0xABCD << 16) ^ pair as u64;
            let base_traj =
                sample_with_trajectory(base_model, schedule, cfg.num_steps, gen_seed)?;
            let new_traj =
                sample_with_trajectory(&retrained, schedule, cfg.num_steps, gen_seed)?;
            let dist = l2(&base_traj.sample, &new_traj.sample);
            // both signals evaluated at the base model's visited latents
            let mut out_diff = 0.0;
            let mut loss_diff = 0.0;
            for (t, x_t) in &base_traj.latents {
                let a = base_model.forward(x_t, *t)?;
                let b = retrained.forward(x_t, *t)?;
                out_diff += l2(&a, &b) / base_traj.latents.len() as f64;
                // frozen eps per (pair, t) for the loss comparison
                let eps: Vec<f64> =
                    (0..a.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let la: f64 = a.iter().zip(&eps).map(|(o, e)| (o - e).powi(2)).sum();
                let lb: f64 = b.iter().zip(&eps).map(|(o, e)| (o - e).powi(2)).sum();
                loss_diff += (la - lb).abs() / base_traj.latents.len() as f64;
            }
            Ok((dist, out_diff, loss_diff))
        })
        .collect();
    let per_pair = per_pair?;
    let dists: Vec<f64> = per_pair.iter().map(|p| p.0).collect();
    let outs: Vec<f64> = per_pair.iter().map(|p| p.1).collect();
    let losses: Vec<f64> = per_pair.iter().map(|p| p.2).collect();
    match (pearson(&dists, &outs), pearson(&dists, &losses)) {
        (Ok(po), Ok(pl)) => Ok(OutputFnReport {
            pearson_output_diff: po,
            pearson_loss_diff: pl,
            pairs: cfg.num_pairs,
            degenerate: false,
        }),
        _ => Ok(OutputFnReport {
            pearson_output_diff: 0.0,
            pearson_loss_diff: 0.0,
            pairs: cfg.num_pairs,
            degenerate: true,
        }),
    }
}
