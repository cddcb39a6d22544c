//! Discrete-time DDPM: variance schedule, forward noising, simple-loss
//! training with per-sample gradients, and deterministic DDIM sampling.

pub mod data;
pub mod model;
pub mod model_io;
pub mod sample;
pub mod schedule;
pub mod train;

pub use data::{generate_dataset, read_dataset, write_dataset, DataPoint};
pub use model::{timestep_embedding, NoisePredictor, T_EMBED_DIM};
pub use model_io::{read_model, write_model};
pub use sample::{sample, sample_with_trajectory, SampleTrajectory};
pub use schedule::{forward_noise, make_linear_schedule, DiffusionSchedule};
pub use train::{init_model, mean_loss, train, TrainConfig, TrainResult};
