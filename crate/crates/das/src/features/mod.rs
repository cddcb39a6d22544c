//! Per-sample, per-timestep gradient features and residuals: extraction,
//! random projection, normalization-and-averaging, and the binary store.

pub mod projection;
pub mod store;

pub use projection::{make_projection, Projection, ProjectionSpec};
pub use store::{store_read, store_write};

use crate::ddpm::schedule::forward_noise;
use crate::ddpm::{DiffusionSchedule, NoisePredictor};
use crate::error::{DasError, Result};
use crate::linalg::Mat;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// What "the gradient" means for a vector-valued noise predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureMode {
    /// Project every row of the d×p output Jacobian (d rows of k features).
    ExactJacobian,
    /// Project the gradient of a scalar function of the output.
    ScalarizedGradient(Scalarizer),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scalarizer {
    SimpleLoss,
    SquareNorm,
    OutputSum,
}

impl FeatureMode {
    pub fn tag(&self) -> (u8, u8) {
        match self {
            FeatureMode::ExactJacobian => (0, 0),
            FeatureMode::ScalarizedGradient(s) => (
                1,
                match s {
                    Scalarizer::SimpleLoss => 0,
                    Scalarizer::SquareNorm => 1,
                    Scalarizer::OutputSum => 2,
                },
            ),
        }
    }

    pub fn from_tag(mode: u8, scalarizer: u8) -> Result<FeatureMode> {
        match (mode, scalarizer) {
            (0, _) => Ok(FeatureMode::ExactJacobian),
            (1, 0) => Ok(FeatureMode::ScalarizedGradient(Scalarizer::SimpleLoss)),
            (1, 1) => Ok(FeatureMode::ScalarizedGradient(Scalarizer::SquareNorm)),
            (1, 2) => Ok(FeatureMode::ScalarizedGradient(Scalarizer::OutputSum)),
            _ => Err(DasError::Format {
                msg: format!("unknown feature mode tag ({mode}, {scalarizer})"),
                offset: 0,
            }),
        }
    }
}

/// One (timestep, noise draw) feature block.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestepFeatures {
    pub t: usize,
    /// k-vector in scalarized mode (1×k), d×k matrix in exact-Jacobian mode.
    pub g: Mat,
    /// Residual ε_θ(x_t, t) − ε, always a d-vector.
    pub r: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleFeatures {
    pub sample_id: u64,
    pub blocks: Vec<TimestepFeatures>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedFeatures {
    pub sample_id: u64,
    pub g: Mat,
    pub r: Vec<f64>,
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub mode: FeatureMode,
    pub k: usize,
    pub d: usize,
    pub timesteps: Vec<usize>,
    pub draws: usize,
    pub samples: Vec<SampleFeatures>,
}

/// `count` timesteps evenly spaced in [1, T], endpoints included when
/// count >= 2; count == 1 uses the midpoint convention [(1+T)/2].
pub fn timestep_grid(t: usize, count: usize) -> Result<Vec<usize>> {
    if count == 0 || count > t {
        return Err(DasError::Parameter(format!(
            "timestep count {count} outside [1, {t}]"
        )));
    }
    if count == 1 {
        return Ok(vec![(1 + t) / 2]);
    }
    let out: Vec<usize> = (0..count)
        .map(|i| {
            let x = 1.0 + i as f64 * (t as f64 - 1.0) / (count as f64 - 1.0);
            x.round() as usize
        })
        .collect();
    debug_assert!(out.windows(2).all(|w| w[0] < w[1]));
    Ok(out)
}

pub struct ExtractConfig {
    pub timesteps: Vec<usize>,
    pub mode: FeatureMode,
    /// Noise draws per timestep (1 for features, 3 for LDS ground truth).
    pub draws: usize,
    pub noise_seed: u64,
    /// Distinguishes independent noise-stream families (train vs targets).
    pub stream_offset: u64,
    /// Maximum d*p Jacobian floats allowed in exact mode.
    pub memory_budget_floats: usize,
}

impl ExtractConfig {
    pub fn new(timesteps: Vec<usize>, mode: FeatureMode, noise_seed: u64) -> Self {
        ExtractConfig {
            timesteps,
            mode,
            draws: 1,
            noise_seed,
            stream_offset: 0,
            memory_budget_floats: 1 << 26,
        }
    }
}

/// The seeded per-sample noise stream: stream id = sample index, so parallel
/// and serial extraction agree bitwise.
fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-sample, per-timestep gradient features and residuals for every x0.
pub fn extract_features(
    model: &NoisePredictor,
    schedule: &DiffusionSchedule,
    xs: &[Vec<f64>],
    proj: &Projection,
    cfg: &ExtractConfig,
) -> Result<FeatureSet> {
    let d = model.output_dim();
    let p = model.num_params();
    for &t in &cfg.timesteps {
        if t < 1 || t > schedule.num_timesteps {
            return Err(DasError::Parameter(format!(
                "timestep {t} outside [1, {}]",
                schedule.num_timesteps
            )));
        }
    }
    if cfg.mode == FeatureMode::ExactJacobian && d * p > cfg.memory_budget_floats {
        return Err(DasError::Capacity(format!(
            "exact-Jacobian mode needs d*p = {} floats, budget is {}",
            d * p,
            cfg.memory_budget_floats
        )));
    }
    let samples: Result<Vec<SampleFeatures>> = xs
        .par_iter()
        .enumerate()
        .map(|(i, x0)| {
            let mut rng = sample_rng(cfg.noise_seed, cfg.stream_offset + i as u64);
            let mut blocks = Vec::with_capacity(cfg.timesteps.len() * cfg.draws);
            for &t in &cfg.timesteps {
                for _ in 0..cfg.draws {
                    let eps: Vec<f64> =
                        (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                    let x_t = forward_noise(x0, t, &eps, schedule)?;
                    let r = model.residual_at(&x_t, t, &eps)?;
                    let g = match cfg.mode {
                        FeatureMode::ExactJacobian => {
                            let jac = model.jacobian_at(&x_t, t)?;
                            let rows: Vec<&[f64]> = (0..d).map(|row| jac.row(row)).collect();
                            Mat::from_rows(&proj.project_batch(&rows))
                        }
                        FeatureMode::ScalarizedGradient(s) => {
                            let grad = match s {
                                Scalarizer::SimpleLoss => {
                                    model.loss_gradient(x0, t, &eps, schedule)?
                                }
                                Scalarizer::SquareNorm => {
                                    model.square_norm_gradient(x0, t, &eps, schedule)?
                                }
                                Scalarizer::OutputSum => {
                                    model.output_sum_gradient(x0, t, &eps, schedule)?
                                }
                            };
                            // recompute the gradient at the identical latent:
                            // the scalarized gradients above re-derive x_t from
                            // (x0, t, eps), matching forward_noise exactly
                            Mat::from_rows(&[proj.project(&grad)])
                        }
                    };
                    blocks.push(TimestepFeatures { t, g, r });
                }
            }
            Ok(SampleFeatures { sample_id: i as u64, blocks })
        })
        .collect();
    Ok(FeatureSet {
        mode: cfg.mode,
        k: proj.out_dim(),
        d,
        timesteps: cfg.timesteps.clone(),
        draws: cfg.draws,
        samples: samples?,
    })
}

/// Features at explicit latents (a recorded denoising trajectory) instead of
/// forward-noised training points. One fresh eps draw per latent supplies the
/// residual (and the simple-loss gradient's reference noise).
pub fn extract_at_latents(
    model: &NoisePredictor,
    latents: &[(usize, Vec<f64>)],
    proj: &Projection,
    mode: FeatureMode,
    noise_seed: u64,
) -> Result<SampleFeatures> {
    let d = model.output_dim();
    let mut rng = sample_rng(noise_seed, 0);
    let mut blocks = Vec::with_capacity(latents.len());
    for (t, x_t) in latents {
        let eps: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let r = model.residual_at(x_t, *t, &eps)?;
        let jac = model.jacobian_at(x_t, *t)?;
        let g = match mode {
            FeatureMode::ExactJacobian => {
                let rows: Vec<&[f64]> = (0..d).map(|row| jac.row(row)).collect();
                Mat::from_rows(&proj.project_batch(&rows))
            }
            FeatureMode::ScalarizedGradient(s) => {
                let out = model.forward(x_t, *t)?;
                let cot: Vec<f64> = match s {
                    Scalarizer::SimpleLoss => {
                        out.iter().zip(&eps).map(|(o, e)| 2.0 * (o - e)).collect()
                    }
                    Scalarizer::SquareNorm => out.iter().map(|o| 2.0 * o).collect(),
                    Scalarizer::OutputSum => vec![1.0; d],
                };
                let grad = jac.matvec_t(&cot);
                Mat::from_rows(&[proj.project(&grad)])
            }
        };
        blocks.push(TimestepFeatures { t: *t, g, r });
    }
    Ok(SampleFeatures { sample_id: 0, blocks })
}

fn average_inner(features: &SampleFeatures, normalize: bool) -> AveragedFeatures {
    let nt = features.blocks.len() as f64;
    let first = &features.blocks[0];
    let (rows, cols) = (first.g.rows, first.g.cols);
    let d = first.r.len();
    let mut g = Mat::zeros(rows, cols);
    let mut r = vec![0.0; d];
    if normalize {
        // per-coordinate energy across timesteps
        let mut g_energy = Mat::zeros(rows, cols);
        let mut r_energy = vec![0.0; d];
        for b in &features.blocks {
            for i in 0..rows {
                let (src, dst) = (b.g.row(i), g_energy.row_mut(i));
                for j in 0..cols {
                    dst[j] += src[j] * src[j];
                }
            }
            for j in 0..d {
                r_energy[j] += b.r[j] * b.r[j];
            }
        }
        for b in &features.blocks {
            for i in 0..rows {
                let (src, en) = (b.g.row(i), g_energy.row(i));
                let dst = g.row_mut(i);
                for j in 0..cols {
                    if en[j] > 0.0 {
                        dst[j] += src[j] / en[j].sqrt() / nt;
                    }
                }
            }
            for j in 0..d {
                if r_energy[j] > 0.0 {
                    r[j] += b.r[j] / r_energy[j].sqrt() / nt;
                }
            }
        }
    } else {
        for b in &features.blocks {
            for i in 0..rows {
                let (src, dst) = (b.g.row(i), g.row_mut(i));
                for j in 0..cols {
                    dst[j] += src[j] / nt;
                }
            }
            for j in 0..d {
                r[j] += b.r[j] / nt;
            }
        }
    }
    AveragedFeatures { sample_id: features.sample_id, g, r, normalized: normalize }
}

/// Unit-energy normalization per coordinate across timesteps, then the mean
/// (zero-energy coordinates map to 0).
pub fn normalize_and_average(features: &SampleFeatures) -> AveragedFeatures {
    average_inner(features, true)
}

/// Arithmetic mean over timesteps, no normalization.
pub fn plain_average(features: &SampleFeatures) -> AveragedFeatures {
    average_inner(features, false)
}

pub fn average_set(set: &FeatureSet, normalize: bool) -> Vec<AveragedFeatures> {
    set.samples
        .iter()
        .map(|s| if normalize { normalize_and_average(s) } else { plain_average(s) })
        .collect()
}
