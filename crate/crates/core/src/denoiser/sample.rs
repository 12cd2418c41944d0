use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::condition::{assemble_input, ConditionSet};
use super::schedule::{from_signed, NoiseSchedule};
use super::unet::{Prediction, UNetParams};
use crate::error::{Error, Result};
use crate::geometry::{Grid, Mask, NocsMap};

/// Anything that predicts the noise in a signal at timestep `k`.
pub trait NoisePredictor {
    fn predict(&self, x: &[f32], k: usize) -> Result<Vec<f32>>;
}

impl<F: Fn(&[f32], usize) -> Vec<f32>> NoisePredictor for F {
    fn predict(&self, x: &[f32], k: usize) -> Result<Vec<f32>> {
        Ok(self(x, k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    /// Stochastic reverse process over all `K` steps.
    Ancestral,
    /// First-order deterministic updates on a uniform timestep sub-grid.
    Fast,
}

/// `n` timesteps spaced uniformly from `K` down to 1 (just `[K]` when `n = 1`).
pub fn timestep_grid(total: usize, n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > total {
        return Err(Error::invalid(format!("sampling steps {n} outside [1, {total}]")));
    }
    if n == 1 {
        return Ok(vec![total]);
    }
    let mut ks: Vec<usize> = (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            (total as f64 - t * (total - 1) as f64).round() as usize
        })
        .collect();
    ks.dedup();
    Ok(ks)
}

/// Run the reverse process from `x_start` (signed range) and return the final clean estimate.
/// Every intermediate clean estimate is clamped to `[−1, 1]` before the next state is formed.
pub fn denoise<P: NoisePredictor + ?Sized>(
    predictor: &P,
    sched: &NoiseSchedule,
    mode: SampleMode,
    steps: usize,
    x_start: Vec<f32>,
    rng: &mut impl Rng,
) -> Result<Vec<f32>> {
    let total = sched.steps();
    let mut x = x_start;
    match mode {
        SampleMode::Fast => {
            let ks = timestep_grid(total, steps)?;
            for (i, &k) in ks.iter().enumerate() {
                let eps = predict_checked(predictor, &x, k)?;
                let ab = sched.alpha_bar(k);
                let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
                let x0: Vec<f64> = x
                    .iter()
                    .zip(&eps)
                    .map(|(&xv, &e)| ((xv as f64 - sb * e as f64) / sa).clamp(-1.0, 1.0))
                    .collect();
                match ks.get(i + 1) {
                    None => return Ok(x0.into_iter().map(|v| v as f32).collect()),
                    Some(&next) => {
                        let abn = sched.alpha_bar(next);
                        let (na, nb) = (abn.sqrt(), (1.0 - abn).sqrt());
                        x = x
                            .iter()
                            .zip(&x0)
                            .map(|(&xv, &v)| {
                                // noise implied by the clamped estimate
                                let e = (xv as f64 - sa * v) / sb;
                                (na * v + nb * e) as f32
                            })
                            .collect();
                    }
                }
            }
            unreachable!("timestep grid is never empty")
        }
        SampleMode::Ancestral => {
            if steps != total {
                return Err(Error::invalid(format!(
                    "ancestral sampling runs all {total} steps, got {steps}"
                )));
            }
            for k in (1..=total).rev() {
                let eps = predict_checked(predictor, &x, k)?;
                let beta = sched.beta(k);
                let ab = sched.alpha_bar(k);
                let ab_prev = sched.alpha_bar(k - 1);
                let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
                // posterior mean of x_{k-1} given x_k and the clamped clean estimate
                let c0 = ab_prev.sqrt() * beta / (1.0 - ab);
                let ck = sched.alpha(k).sqrt() * (1.0 - ab_prev) / (1.0 - ab);
                let sigma = if k > 1 { ((1.0 - ab_prev) / (1.0 - ab) * beta).sqrt() } else { 0.0 };
                x = x
                    .iter()
                    .zip(&eps)
                    .map(|(&xv, &e)| {
                        let x0 = ((xv as f64 - sb * e as f64) / sa).clamp(-1.0, 1.0);
                        let mean = c0 * x0 + ck * xv as f64;
                        let z: f64 = if k > 1 { StandardNormal.sample(rng) } else { 0.0 };
                        (mean + sigma * z) as f32
                    })
                    .collect();
            }
            Ok(x)
        }
    }
}

fn predict_checked<P: NoisePredictor + ?Sized>(p: &P, x: &[f32], k: usize) -> Result<Vec<f32>> {
    let eps = p.predict(x, k)?;
    if eps.len() != x.len() {
        return Err(Error::shape(format!("predictor returned {} values for {}", eps.len(), x.len())));
    }
    Ok(eps)
}

/// The network with fixed conditions, evaluated one sample at a time.
pub struct ConditionedNet<'a> {
    pub params: &'a UNetParams<f32>,
    pub cond: &'a ConditionSet,
    pub sched: &'a NoiseSchedule,
}

impl NoisePredictor for ConditionedNet<'_> {
    fn predict(&self, x: &[f32], k: usize) -> Result<Vec<f32>> {
        self.sched.check_step(k)?;
        let cfg = self.params.config();
        let input = assemble_input(&[x], &[self.cond], &[k], cfg.image_size, cfg.feat_channels)?;
        let mut out = self.params.forward(input)?.data;
        let (a, b) = cfg.prediction.coefficients(self.sched.alpha_bar(k));
        if cfg.prediction != Prediction::Noise {
            let (a, b) = (a as f32, b as f32);
            for (o, &xv) in out.iter_mut().zip(x) {
                *o = a * xv + b * *o;
            }
        }
        Ok(out)
    }
}

/// Sample a NOCS map for `cond`; the foreground is taken from `mask`.
pub fn sample(
    params: &UNetParams<f32>,
    cond: &ConditionSet,
    mask: &Mask,
    sched: &NoiseSchedule,
    mode: SampleMode,
    steps: usize,
    rng: &mut impl Rng,
) -> Result<NocsMap> {
    let size = params.config().image_size;
    if mask.width() != size || mask.height() != size {
        return Err(Error::shape(format!(
            "mask is {}x{}, network expects {size}x{size}",
            mask.width(),
            mask.height()
        )));
    }
    cond.validate(size, params.config().feat_channels)?;
    let hw = size * size;
    let start: Vec<f32> = (0..3 * hw)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            v as f32
        })
        .collect();
    let net = ConditionedNet { params, cond, sched };
    let x0 = denoise(&net, sched, mode, steps, start, rng)?;
    let values = Grid::from_fn(size, size, |x, y| {
        let i = y * size + x;
        [0, 1, 2].map(|c| from_signed(x0[c * hw + i]).clamp(0.0, 1.0))
    });
    NocsMap::new(values, mask.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::make_schedule;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_includes_both_ends() {
        assert_eq!(timestep_grid(1000, 1).unwrap(), vec![1000]);
        let g = timestep_grid(1000, 10).unwrap();
        assert_eq!(g.len(), 10);
        assert_eq!((g[0], g[9]), (1000, 1));
        assert!(g.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(timestep_grid(5, 5).unwrap(), vec![5, 4, 3, 2, 1]);
        assert!(timestep_grid(10, 0).is_err());
        assert!(timestep_grid(10, 11).is_err());
    }

    #[test]
    fn exact_noise_oracle_recovers_target_in_one_step() {
        let sched = make_schedule(1000, 1e-4, 0.02).unwrap();
        let c = [0.3f64, -0.7, 0.9];
        let s = &sched;
        let oracle = move |x: &[f32], k: usize| -> Vec<f32> {
            let ab = s.alpha_bar(k);
            x.iter()
                .zip(c.iter().cycle())
                .map(|(&v, &ci)| ((v as f64 - ab.sqrt() * ci) / (1.0 - ab).sqrt()) as f32)
                .collect()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let start = vec![2.5f32, -1.0, 0.1];
        let out = denoise(&oracle, &sched, SampleMode::Fast, 1, start, &mut rng).unwrap();
        for (o, t) in out.iter().zip(c) {
            assert!((*o as f64 - t).abs() < 1e-3, "{o} vs {t}");
        }
    }

    #[test]
    fn ancestral_matches_standard_update_when_estimates_in_range() {
        let sched = make_schedule(3, 0.01, 0.05).unwrap();
        let pred = |x: &[f32], _k: usize| x.iter().map(|v| 0.5 * v).collect::<Vec<f32>>();
        let start = vec![0.4f32, -0.2];
        let out = denoise(&pred, &sched, SampleMode::Ancestral, 3, start.clone(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x: Vec<f64> = start.iter().map(|&v| v as f64).collect();
        for k in (1..=3).rev() {
            let (beta, ab) = (sched.beta(k), sched.alpha_bar(k));
            let sigma = ((1.0 - sched.alpha_bar(k - 1)) / (1.0 - ab) * beta).sqrt();
            x = x
                .iter()
                .map(|&v| {
                    let e = (0.5 * v as f32) as f64;
                    let mean = (v - beta / (1.0 - ab).sqrt() * e) / (1.0 - beta).sqrt();
                    let z: f64 = if k > 1 { StandardNormal.sample(&mut rng) } else { 0.0 };
                    mean + if k > 1 { sigma * z } else { 0.0 }
                })
                .collect();
        }
        for (o, r) in out.iter().zip(&x) {
            assert!((*o as f64 - r).abs() < 1e-5, "{o} vs {r}");
        }
    }

    #[test]
    fn clean_estimates_are_clamped() {
        let sched = make_schedule(100, 1e-4, 0.02).unwrap();
        let zero = |x: &[f32], _k: usize| vec![0.0; x.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let start = vec![50.0f32, -50.0, 0.0];
        let out = denoise(&zero, &sched, SampleMode::Fast, 4, start.clone(), &mut rng).unwrap();
        assert_eq!(out, vec![1.0, -1.0, 0.0]);
        let out = denoise(&zero, &sched, SampleMode::Ancestral, 100, start, &mut rng).unwrap();
        assert!(out.iter().all(|v| v.abs() <= 1.0 + 1e-6));
    }

    #[test]
    fn velocity_net_with_zero_output_implies_shrunken_clean_signal() {
        let cfg = super::super::UNetConfig {
            zero_init_output: true,
            prediction: Prediction::Velocity,
            ..super::super::UNetConfig::reduced()
        };
        let params = UNetParams::<f32>::init(&cfg, 3).unwrap();
        let sched = make_schedule(100, 1e-4, 0.02).unwrap();
        let cond = ConditionSet::default();
        let net = ConditionedNet { params: &params, cond: &cond, sched: &sched };
        let x: Vec<f32> = (0..3 * 16 * 16).map(|i| (i as f32 * 0.37).sin()).collect();
        let k = 60;
        let ab = sched.alpha_bar(k);
        let eps = net.predict(&x, k).unwrap();
        for (e, v) in eps.iter().zip(&x) {
            let x0 = (*v as f64 - (1.0 - ab).sqrt() * *e as f64) / ab.sqrt();
            assert!((x0 - ab.sqrt() * *v as f64).abs() < 1e-5);
        }
        assert!(net.predict(&x, 101).is_err());
    }

    #[test]
    fn ancestral_requires_all_steps() {
        let sched = make_schedule(10, 1e-3, 0.2).unwrap();
        let zero = |x: &[f32], _k: usize| vec![0.0; x.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(denoise(&zero, &sched, SampleMode::Ancestral, 5, vec![0.0], &mut rng).is_err());
        assert!(denoise(&zero, &sched, SampleMode::Ancestral, 10, vec![0.0], &mut rng).is_ok());
    }
}
