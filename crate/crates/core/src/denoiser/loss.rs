use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::condition::{assemble_input, ConditionSet, Modality};
use super::layers::Tensor;
use super::scalar::Float;
use super::schedule::{diffuse_signed, to_signed, NoiseSchedule};
use super::unet::UNetParams;
use crate::error::{Error, Result};
use crate::geometry::NocsMap;

/// One training example: conditions at the network size and the target NOCS map.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub cond: ConditionSet,
    pub target: NocsMap,
}

/// Target NOCS values mapped to `[−1,1]`, laid out `(channel, y, x)`.
pub fn signed_target<T: Float>(nocs: &NocsMap) -> Vec<T> {
    let v = nocs.values().as_slice();
    let hw = v.len();
    let mut out = vec![T::ZERO; 3 * hw];
    for (i, p) in v.iter().enumerate() {
        for c in 0..3 {
            out[c * hw + i] = to_signed(T::from_f64(p[c] as f64));
        }
    }
    out
}

/// Noise-prediction loss of one batch and its exact gradient.
///
/// Per sample, in this order: timestep uniform in `[1, K]`, standard-normal noise,
/// then an independent drop decision for each condition.
pub fn loss_and_grads<T: Float>(
    params: &UNetParams<T>,
    batch: &[TrainingSample],
    sched: &NoiseSchedule,
    drop_rate: f64,
    rng: &mut impl Rng,
) -> Result<(f64, Vec<Vec<T>>)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty training batch"));
    }
    if !(0.0..=1.0).contains(&drop_rate) {
        return Err(Error::invalid(format!("drop rate {drop_rate} outside [0, 1]")));
    }
    let cfg = params.config();
    let size = cfg.image_size;
    let mut noisy = Vec::with_capacity(batch.len());
    let mut noise = Vec::with_capacity(batch.len());
    let mut conds = Vec::with_capacity(batch.len());
    let mut steps = Vec::with_capacity(batch.len());
    for s in batch {
        if s.target.width() != size || s.target.height() != size {
            return Err(Error::shape(format!(
                "target is {}x{}, network expects {size}x{size}",
                s.target.width(),
                s.target.height()
            )));
        }
        let k = rng.random_range(1..=sched.steps());
        let eps: Vec<T> = (0..3 * size * size)
            .map(|_| T::from_f64(StandardNormal.sample(rng)))
            .collect();
        let mut cond = s.cond.clone();
        for m in Modality::ALL {
            if rng.random_bool(drop_rate) {
                cond.drop(m);
            }
        }
        noisy.push(diffuse_signed(&signed_target::<T>(&s.target), k, &eps, sched)?);
        noise.push(eps);
        conds.push(cond);
        steps.push(k);
    }
    let noisy_refs: Vec<&[T]> = noisy.iter().map(Vec::as_slice).collect();
    let cond_refs: Vec<&ConditionSet> = conds.iter().collect();
    let input = assemble_input(&noisy_refs, &cond_refs, &steps, size, cfg.feat_channels)?;
    let (out, cache) = params.forward_cached(input)?;

    let b = batch.len();
    let hw = size * size;
    let count = (b * 3 * hw) as f64;
    let mut dy = Tensor::zeros(3, b, size, size);
    let mut loss = 0.0f64;
    let scale = T::from_f64(2.0 / count);
    for (bi, eps) in noise.iter().enumerate() {
        let (ca, cb) = cfg.prediction.coefficients(sched.alpha_bar(steps[bi]));
        let (ca, cb) = (T::from_f64(ca), T::from_f64(cb));
        for c in 0..3 {
            for i in 0..hw {
                let j = (c * b + bi) * hw + i;
                let estimate = ca * noisy[bi][c * hw + i] + cb * out.data[j];
                let diff = estimate - eps[c * hw + i];
                loss += diff.to_f64() * diff.to_f64();
                dy.data[j] = cb * diff * scale;
            }
        }
    }
    let grads = params.backward(&cache, &dy);
    Ok((loss / count, grads))
}
