use serde::{Deserialize, Serialize};

use super::scalar::Float;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

/// Linear-β diffusion schedule. Timesteps are 1-based: `k ∈ [1, K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    config: ScheduleConfig,
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps < 2 {
        return Err(Error::invalid(format!("schedule needs at least 2 steps, got {steps}")));
    }
    if !(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0) {
        return Err(Error::invalid(format!(
            "schedule bounds must satisfy 0 < beta_start < beta_end < 1, got {beta_start}, {beta_end}"
        )));
    }
    let betas: Vec<f64> = (0..steps)
        .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64)
        .collect();
    let mut acc = 1.0;
    let alpha_bars = betas
        .iter()
        .map(|b| {
            acc *= 1.0 - b;
            acc
        })
        .collect();
    Ok(NoiseSchedule {
        config: ScheduleConfig {
            steps,
            beta_start,
            beta_end,
        },
        betas,
        alpha_bars,
    })
}

impl NoiseSchedule {
    pub fn from_config(c: &ScheduleConfig) -> Result<Self> {
        make_schedule(c.steps, c.beta_start, c.beta_end)
    }

    pub fn config(&self) -> ScheduleConfig {
        self.config
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, k: usize) -> f64 {
        self.betas[k - 1]
    }

    pub fn alpha(&self, k: usize) -> f64 {
        1.0 - self.betas[k - 1]
    }

    /// Cumulative product `ᾱ_k`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            self.alpha_bars[k - 1]
        }
    }

    pub fn check_step(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.steps() {
            return Err(Error::invalid(format!("timestep {k} outside [1, {}]", self.steps())));
        }
        Ok(())
    }
}

/// `√ᾱ_k · x0 + √(1−ᾱ_k) · eps` on values already in the signed range.
pub fn diffuse_signed<T: Float>(x0: &[T], k: usize, eps: &[T], sched: &NoiseSchedule) -> Result<Vec<T>> {
    sched.check_step(k)?;
    if x0.len() != eps.len() {
        return Err(Error::shape("signal and noise lengths differ"));
    }
    let ab = sched.alpha_bar(k);
    let (a, b) = (T::from_f64(ab.sqrt()), T::from_f64((1.0 - ab).sqrt()));
    Ok(x0.iter().zip(eps).map(|(&x, &e)| a * x + b * e).collect())
}

/// Closed-form marginal sample for NOCS values in `[0,1]`, mapped to `[−1,1]` first.
pub fn forward_diffuse<T: Float>(n0: &[T], k: usize, eps: &[T], sched: &NoiseSchedule) -> Result<Vec<T>> {
    let signed: Vec<T> = n0.iter().map(|&v| to_signed(v)).collect();
    diffuse_signed(&signed, k, eps, sched)
}

#[inline]
pub fn to_signed<T: Float>(v: T) -> T {
    v + v - T::ONE
}

#[inline]
pub fn from_signed<T: Float>(v: T) -> T {
    (v + T::ONE) * T::from_f64(0.5)
}
