//! Conditional denoising-diffusion NOCS estimator.
//!
//! A U-Net predicts the noise added to a NOCS map (mapped to `[−1,1]`) given
//! optional normal, RGB and feature images and a category id. Gradients are
//! derived by hand; training uses Adam. Sampling supports the full ancestral
//! reverse process and a first-order deterministic sampler on a timestep sub-grid.

mod checkpoint;
mod condition;
mod layers;
mod loss;
mod optimizer;
mod sample;
mod scalar;
mod schedule;
mod train;
mod unet;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use condition::{assemble_input, parse_modalities, ConditionSet, Modality};
pub use layers::Tensor;
pub use loss::{loss_and_grads, signed_target, TrainingSample};
pub use optimizer::{Adam, AdamConfig};
pub use sample::{denoise, sample, timestep_grid, ConditionedNet, NoisePredictor, SampleMode};
pub use scalar::Float;
pub use schedule::{diffuse_signed, forward_diffuse, from_signed, make_schedule, to_signed, NoiseSchedule, ScheduleConfig};
pub use train::{train, TrainConfig, TrainEvent};
pub use unet::{sinusoid, ForwardCache, NetInput, ParamSpec, Prediction, UNetConfig, UNetParams};
