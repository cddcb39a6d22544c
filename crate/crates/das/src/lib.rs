//! Training-data attribution for small denoising diffusion models: a DDPM
//! stack with hand-written reverse-mode gradients, projected gradient
//! features, a family of attribution scores built on a shared damped kernel,
//! and evaluation harnesses (linear datamodeling score, counterfactual
//! retraining, output-function comparison).

pub mod error;
pub mod io_util;
pub mod linalg;

pub mod attribution;
pub mod cli;
pub mod config;
pub mod ddpm;
pub mod eval;
pub mod features;

pub use error::{DasError, Result};
