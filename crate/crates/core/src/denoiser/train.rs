use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_and_grads, TrainingSample};
use super::optimizer::{Adam, AdamConfig};
use super::schedule::NoiseSchedule;
use super::unet::UNetParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub image_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Probability of dropping each condition, independently per sample.
    pub drop_rate: f64,
    pub steps: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Linear learning-rate ramp length.
    pub warmup_steps: usize,
    /// Cosine decay floor as a fraction of the peak learning rate.
    pub min_lr_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            image_size: 64,
            batch_size: 8,
            learning_rate: 1e-3,
            drop_rate: 0.25,
            steps: 10_000,
            seed: 0,
            adam: AdamConfig::default(),
            warmup_steps: 200,
            min_lr_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || !self.image_size.is_multiple_of(4) {
            return Err(Error::invalid(format!(
                "image size {} must be a positive multiple of 4",
                self.image_size
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(Error::invalid(format!("drop rate {} outside [0, 1)", self.drop_rate)));
        }
        if !(0.0..=1.0).contains(&self.min_lr_fraction) {
            return Err(Error::invalid("min_lr_fraction outside [0, 1]"));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.epsilon <= 0.0 {
            return Err(Error::invalid("optimizer moment coefficients must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Learning rate at 0-based step `t`: linear warmup, then cosine decay to the floor.
    pub fn learning_rate_at(&self, t: usize) -> f64 {
        let peak = self.learning_rate;
        if t < self.warmup_steps {
            return peak * (t + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.steps.saturating_sub(self.warmup_steps).max(1);
        let progress = ((t - self.warmup_steps) as f64 / span as f64).min(1.0);
        let floor = peak * self.min_lr_fraction;
        floor + (peak - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainEvent {
    pub step: usize,
    pub loss: f64,
    pub learning_rate: f64,
}

/// Run the training loop. `next_batch` assembles (and augments) each batch from
/// the shared RNG stream; `on_step` sees every completed step.
///
/// On a non-finite loss or gradient the parameters keep their last good values
/// and a divergence error is returned.
pub fn train(
    params: &mut UNetParams<f32>,
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
    mut next_batch: impl FnMut(&mut ChaCha8Rng, usize) -> Result<Vec<TrainingSample>>,
    mut on_step: impl FnMut(&TrainEvent, &UNetParams<f32>),
) -> Result<()> {
    cfg.validate()?;
    if params.config().image_size != cfg.image_size {
        return Err(Error::invalid(format!(
            "network size {} differs from training size {}",
            params.config().image_size,
            cfg.image_size
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(cfg.adam, params.values());
    for step in 0..cfg.steps {
        let batch = next_batch(&mut rng, cfg.batch_size)?;
        let (loss, grads) = loss_and_grads(params, &batch, sched, cfg.drop_rate, &mut rng)?;
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("non-finite loss at step {step}")));
        }
        let lr = cfg.learning_rate_at(step);
        opt.step(params.values_mut(), &grads, lr)
            .map_err(|e| match e {
                Error::Divergence(m) => Error::Divergence(format!("{m} at step {step}")),
                other => other,
            })?;
        on_step(
            &TrainEvent {
                step: step + 1,
                loss,
                learning_rate: lr,
            },
            params,
        );
    }
    Ok(())
}
