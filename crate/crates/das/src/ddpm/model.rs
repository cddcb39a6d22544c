//! Fully-connected noise predictor with hand-written reverse-mode
//! differentiation. The parameter vector is flat so per-sample gradients and
//! Jacobians are plain `Vec<f64>` slices.

use crate::ddpm::schedule::{forward_noise, DiffusionSchedule};
use crate::error::{DasError, Result};
use crate::linalg::Mat;
use rand::Rng;
use rand_distr::StandardNormal;

pub const T_EMBED_DIM: usize = 8;

/// tanh MLP mapping concat(x_t, embed(t)) -> predicted noise of dimension d.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePredictor {
    /// Sizes including input and output: [d + T_EMBED_DIM, h1, ..., d].
    pub layer_sizes: Vec<usize>,
    /// Flat parameters, per layer: weights row-major (out x in) then bias.
    pub params: Vec<f64>,
}

pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes
        .windows(2)
        .map(|w| (w[0] + 1) * w[1])
        .sum()
}

/// Sinusoidal timestep embedding of dimension `T_EMBED_DIM`.
pub fn timestep_embedding(t: usize) -> [f64; T_EMBED_DIM] {
    let mut out = [0.0; T_EMBED_DIM];
    let half = T_EMBED_DIM / 2;
    for j in 0..half {
        let freq = (10_000.0f64).powf(-(j as f64) / half as f64);
        out[2 * j] = (t as f64 * freq).sin();
        out[2 * j + 1] = (t as f64 * freq).cos();
    }
    out
}

struct ForwardTrace {
    /// Activations per layer, activations[0] is the input.
    activations: Vec<Vec<f64>>,
}

impl NoisePredictor {
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize) -> Self {
        let mut layer_sizes = vec![input_dim + T_EMBED_DIM];
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(output_dim);
        let p = param_count(&layer_sizes);
        NoisePredictor { layer_sizes, params: vec![0.0; p] }
    }

    /// Glorot-style random init, deterministic in the rng.
    pub fn init<R: Rng>(input_dim: usize, hidden: &[usize], output_dim: usize, rng: &mut R) -> Self {
        let mut m = Self::new(input_dim, hidden, output_dim);
        let sizes = m.layer_sizes.clone();
        let mut off = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (2.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                let z: f64 = rng.sample(StandardNormal);
                m.params[off] = scale * z;
                off += 1;
            }
            off += fan_out; // biases stay zero
        }
        m
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0] - T_EMBED_DIM
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, x_t: &[f64]) -> Result<()> {
        if x_t.len() != self.input_dim() {
            return Err(DasError::Shape(format!(
                "x_t dim {} != model input dim {}",
                x_t.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn forward_trace(&self, x_t: &[f64], t: usize) -> ForwardTrace {
        let emb = timestep_embedding(t);
        let mut v: Vec<f64> = Vec::with_capacity(self.layer_sizes[0]);
        v.extend_from_slice(x_t);
        v.extend_from_slice(&emb);
        let mut activations = vec![v];
        let n_layers = self.layer_sizes.len() - 1;
        let mut off = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let prev = activations.last().unwrap();
            let mut z = vec![0.0; n_out];
            for o in 0..n_out {
                let wrow = &self.params[off + o * n_in..off + (o + 1) * n_in];
                let mut s = self.params[off + n_in * n_out + o]; // bias
                for i in 0..n_in {
                    s += wrow[i] * prev[i];
                }
                z[o] = s;
            }
            if l + 1 < n_layers {
                for zo in z.iter_mut() {
                    *zo = zo.tanh();
                }
            }
            activations.push(z);
            off += (n_in + 1) * n_out;
        }
        ForwardTrace { activations }
    }

    /// ε_θ(x_t, t)
    pub fn forward(&self, x_t: &[f64], t: usize) -> Result<Vec<f64>> {
        self.check_input(x_t)?;
        let mut trace = self.forward_trace(x_t, t);
        Ok(trace.activations.pop().unwrap())
    }

    /// Vector-Jacobian product: given a cotangent on the output, accumulate
    /// the gradient with respect to the flat parameter vector into `grad`.
    fn vjp_into(&self, trace: &ForwardTrace, cotangent: &[f64], grad: &mut [f64]) {
        let n_layers = self.layer_sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += (self.layer_sizes[l] + 1) * self.layer_sizes[l + 1];
        }
        let mut delta = cotangent.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let off = offsets[l];
            let inp = &trace.activations[l];
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    let gw = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                    for i in 0..n_in {
                        gw[i] += d * inp[i];
                    }
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                // propagate through W and the tanh of the previous layer
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let wrow = &self.params[off + o * n_in..off + (o + 1) * n_in];
                    for i in 0..n_in {
                        prev[i] += d * wrow[i];
                    }
                }
                for i in 0..n_in {
                    let a = inp[i];
                    prev[i] *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
    }

    /// ‖ε_θ(x_t, t) − eps‖² with x_t from the forward-noise formula
    /// (single Monte-Carlo term of the training objective).
    pub fn simple_loss(
        &self,
        x0: &[f64],
        t: usize,
        eps: &[f64],
        schedule: &DiffusionSchedule,
    ) -> Result<f64> {
        let x_t = forward_noise(x0, t, eps, schedule)?;
        let out = self.forward(&x_t, t)?;
        Ok(out.iter().zip(eps).map(|(o, e)| (o - e) * (o - e)).sum())
    }

    /// Exact reverse-mode gradient of `simple_loss` with respect to θ.
    pub fn loss_gradient(
        &self,
        x0: &[f64],
        t: usize,
        eps: &[f64],
        schedule: &DiffusionSchedule,
    ) -> Result<Vec<f64>> {
        let x_t = forward_noise(x0, t, eps, schedule)?;
        self.check_input(&x_t)?;
        let trace = self.forward_trace(&x_t, t);
        let out = trace.activations.last().unwrap();
        let cot: Vec<f64> = out.iter().zip(eps).map(|(o, e)| 2.0 * (o - e)).collect();
        let mut grad = vec![0.0; self.num_params()];
        self.vjp_into(&trace, &cot, &mut grad);
        Ok(grad)
    }

    /// Gradient of ‖ε_θ‖² with respect to θ.
    pub fn square_norm_gradient(
        &self,
        x0: &[f64],
        t: usize,
        eps: &[f64],
        schedule: &DiffusionSchedule,
    ) -> Result<Vec<f64>> {
        let x_t = forward_noise(x0, t, eps, schedule)?;
        self.check_input(&x_t)?;
        let trace = self.forward_trace(&x_t, t);
        let out = trace.activations.last().unwrap();
        let cot: Vec<f64> = out.iter().map(|o| 2.0 * o).collect();
        let mut grad = vec![0.0; self.num_params()];
        self.vjp_into(&trace, &cot, &mut grad);
        Ok(grad)
    }

    /// Gradient of Σ_i ε_θ,i with respect to θ.
    pub fn output_sum_gradient(
        &self,
        x0: &[f64],
        t: usize,
        eps: &[f64],
        schedule: &DiffusionSchedule,
    ) -> Result<Vec<f64>> {
        let x_t = forward_noise(x0, t, eps, schedule)?;
        self.check_input(&x_t)?;
        let trace = self.forward_trace(&x_t, t);
        let cot = vec![1.0; self.output_dim()];
        let mut grad = vec![0.0; self.num_params()];
        self.vjp_into(&trace, &cot, &mut grad);
        Ok(grad)
    }

    /// d×p Jacobian of the network output at (x_t, t) with respect to θ;
    /// row i is the gradient of output coordinate i.
    pub fn output_jacobian(
        &self,
        x0: &[f64],
        t: usize,
        eps: &[f64],
        schedule: &DiffusionSchedule,
    ) -> Result<Mat> {
        let x_t = forward_noise(x0, t, eps, schedule)?;
        self.jacobian_at(&x_t, t)
    }

    /// Jacobian at an explicit latent x_t.
    pub fn jacobian_at(&self, x_t: &[f64], t: usize) -> Result<Mat> {
        self.check_input(x_t)?;
        let trace = self.forward_trace(x_t, t);
        let d = self.output_dim();
        let mut jac = Mat::zeros(d, self.num_params());
        let mut cot = vec![0.0; d];
        for i in 0..d {
            cot[i] = 1.0;
            self.vjp_into(&trace, &cot, jac.row_mut(i));
            cot[i] = 0.0;
        }
        Ok(jac)
    }

    /// Residual ε_θ(x_t,t) − eps at an explicit latent.
    pub fn residual_at(&self, x_t: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>> {
        let out = self.forward(x_t, t)?;
        Ok(out.iter().zip(eps).map(|(o, e)| o - e).collect())
    }
}
