//! Pixel-space denoising diffusion over packed material tensors: noise
//! schedule, triple-head network, losses, training and sampling.

pub mod cond;
pub mod eval;
pub mod graph;
pub mod loss;
pub mod model;
pub mod sample;
pub mod schedule;
pub mod tensor;
pub mod train;

pub use cond::{pack_materials, reconstruct_x0, unpack_materials, ConditioningSet, RefinerConditioning};
pub use eval::{evaluate, material_rmse, mean_rmse};
pub use loss::{feature_loss, loss_l2, loss_render, loss_v, pyramid_features};
pub use model::{Denoiser, HeadMode, ModelConfig};
pub use sample::{sample, sample_latent, sampling_timesteps, LatentOverride};
pub use schedule::{add_noise, make_schedule, predict_x0, v_target, NoiseSchedule};
pub use tensor::Tensor;
pub use train::{grad_check, loss_and_grad, train, train_step, train_step_with_draws, Adam, Trainer, Example, GradCheckReport, StepDraws, StepMetrics, TrainConfig};
