use crate::error::{DasError, Result};

/// The β/α/ᾱ tables governing the forward and reverse processes.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    pub num_timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

impl DiffusionSchedule {
    /// ᾱ_t for a 1-based timestep.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }
}

/// Linear variance schedule: betas interpolate from `beta_start` to `beta_end`.
pub fn make_linear_schedule(t: usize, beta_start: f64, beta_end: f64) -> Result<DiffusionSchedule> {
    if t < 1 {
        return Err(DasError::Parameter("num_timesteps must be >= 1".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(DasError::Parameter(format!(
            "need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )));
    }
    let betas: Vec<f64> = if t == 1 {
        vec![beta_start]
    } else {
        (0..t)
            .map(|i| beta_start + (i as f64 / (t - 1) as f64) * (beta_end - beta_start))
            .collect()
    };
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bars = Vec::with_capacity(t);
    let mut acc = 1.0;
    for &a in &alphas {
        acc *= a;
        alpha_bars.push(acc);
    }
    Ok(DiffusionSchedule {
        num_timesteps: t,
        beta_start,
        beta_end,
        betas,
        alphas,
        alpha_bars,
    })
}

/// x_t = √ᾱ_t x_0 + √(1-ᾱ_t) ε
pub fn forward_noise(
    x0: &[f64],
    t: usize,
    eps: &[f64],
    schedule: &DiffusionSchedule,
) -> Result<Vec<f64>> {
    if eps.len() != x0.len() {
        return Err(DasError::Shape(format!(
            "eps dim {} != x0 dim {}",
            eps.len(),
            x0.len()
        )));
    }
    if t < 1 || t > schedule.num_timesteps {
        return Err(DasError::Parameter(format!(
            "timestep {t} outside [1, {}]",
            schedule.num_timesteps
        )));
    }
    let ab = schedule.alpha_bar(t);
    let c0 = ab.sqrt();
    let ce = (1.0 - ab).sqrt();
    Ok(x0.iter().zip(eps).map(|(x, e)| c0 * x + ce * e).collect())
}
