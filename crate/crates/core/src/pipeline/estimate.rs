use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conditions::InferenceRequest;
use super::model::PoseModel;
use crate::denoiser::{sample, Modality, SampleMode};
use crate::error::{Error, Result};
use crate::geometry::{backproject, unwarp_nocs, BoundingBox, Grid, NocsMap, PointCloud, SimilarityTransform};
use crate::registration::{build_correspondences, robust_register, PoseHypothesis, RobustParams};

/// How the registration noise bound is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseBound {
    /// Fixed bound in scene units.
    Absolute(f64),
    /// Fraction of the observed cloud's bounding-box diagonal.
    Relative(f64),
}

/// Sampling and registration settings for [`estimate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions {
    pub mode: SampleMode,
    /// Denoising steps; fast mode uses a sub-grid of this length.
    pub sample_steps: usize,
    pub noise_bound: NoiseBound,
    /// Registration settings; `noise_bound` and `seed` are filled per hypothesis.
    pub robust: RobustParams,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            mode: SampleMode::Fast,
            sample_steps: 10,
            noise_bound: NoiseBound::Relative(0.02),
            robust: RobustParams::default(),
        }
    }
}

/// Seed of hypothesis `index` under `master`: a 64-bit mix, independent of other indices.
pub fn hypothesis_seed(master: u64, index: usize) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(splitmix(master) ^ (index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// One sampled NOCS map, before registration.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledNocs {
    pub index: usize,
    pub seed: u64,
    /// At the network's square size.
    pub square: NocsMap,
    /// Placed back in the original frame, restricted to the request mask.
    pub full: NocsMap,
}

/// A sampled map with its registration outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub sampled: SampledNocs,
    pub pose: Option<PoseHypothesis>,
    /// Why registration failed, when it did.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub best: PoseHypothesis,
    pub hypotheses: Vec<Hypothesis>,
    pub bbox: BoundingBox,
    pub noise_bound: f64,
    /// Modalities that were supplied to the network.
    pub modalities: Vec<Modality>,
}

impl InferenceResult {
    pub fn best_hypothesis(&self) -> &Hypothesis {
        &self.hypotheses[self.best.index]
    }

    /// Every foreground NOCS point of the best map moved into the camera frame.
    pub fn completed_cloud(&self) -> PointCloud {
        complete_point_cloud(&self.best_hypothesis().sampled.full, &self.best.transform)
    }
}

/// Sample `req.n_noises` NOCS maps, one seed per hypothesis, in parallel.
pub fn sample_hypotheses(req: &InferenceRequest, model: &PoseModel, opts: &EstimateOptions) -> Result<(Vec<SampledNocs>, BoundingBox, Vec<Modality>)> {
    let prepared = model.prepare(req)?;
    let present: Vec<Modality> = Modality::ALL.into_iter().filter(|&m| prepared.cond.has(m)).collect();
    let (w, h) = (req.intr.width, req.intr.height);
    let maps = (0..req.n_noises)
        .into_par_iter()
        .map(|index| {
            let seed = hypothesis_seed(req.seed, index);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let square = sample(
                &model.params,
                &prepared.cond,
                &prepared.mask,
                &model.schedule,
                opts.mode,
                opts.sample_steps,
                &mut rng,
            )?;
            let full = restrict(&unwarp_nocs(&square, &prepared.bbox, w, h)?, &req.mask)?;
            Ok(SampledNocs {
                index,
                seed,
                square,
                full,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((maps, prepared.bbox, present))
}

fn restrict(nocs: &NocsMap, mask: &Grid<bool>) -> Result<NocsMap> {
    let both = Grid::from_vec(
        mask.width(),
        mask.height(),
        nocs.mask().as_slice().iter().zip(mask.as_slice()).map(|(a, b)| *a && *b).collect(),
    )?;
    nocs.with_mask(&both)
}

/// Registration noise bound for the request's observed cloud.
pub fn resolve_noise_bound(req: &InferenceRequest, bound: NoiseBound) -> Result<f64> {
    let value = match bound {
        NoiseBound::Absolute(v) => v,
        NoiseBound::Relative(f) => {
            let depth = req
                .depth
                .as_ref()
                .ok_or_else(|| Error::invalid("registration needs a depth image"))?;
            f * backproject(depth, &req.intr, &req.mask)?.extent()
        }
    };
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::invalid(format!("noise bound must be positive, got {value}")))
    }
}

/// Register each full-frame map against the request's depth; keep the most confident.
///
/// Ties go to the lowest index. Fails only when no map can be registered.
pub fn register_hypotheses(
    req: &InferenceRequest,
    maps: Vec<SampledNocs>,
    robust: &RobustParams,
    noise_bound: f64,
) -> Result<(PoseHypothesis, Vec<Hypothesis>)> {
    let depth = req
        .depth
        .as_ref()
        .ok_or_else(|| Error::invalid("registration needs a depth image"))?;
    let hypotheses: Vec<Hypothesis> = maps
        .into_par_iter()
        .enumerate()
        .map(|(position, sampled)| {
            let mut rng = ChaCha8Rng::seed_from_u64(sampled.seed);
            rng.set_stream(1);
            let params = RobustParams {
                noise_bound,
                seed: sampled.seed,
                ..*robust
            };
            let outcome = build_correspondences(&sampled.full, depth, &req.mask, &req.intr, params.max_correspondences, &mut rng)
                .and_then(|corrs| robust_register(&corrs, &params));
            match outcome {
                Ok(mut pose) => {
                    pose.index = position;
                    Hypothesis {
                        sampled,
                        pose: Some(pose),
                        failure: None,
                    }
                }
                Err(e) => Hypothesis {
                    sampled,
                    pose: None,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect();
    let best = select_best(hypotheses.iter().filter_map(|h| h.pose.as_ref())).ok_or(Error::NoValidHypothesis)?;
    Ok((best, hypotheses))
}

/// Highest confidence; the first one wins ties.
pub fn select_best<'a>(poses: impl IntoIterator<Item = &'a PoseHypothesis>) -> Option<PoseHypothesis> {
    let mut best: Option<&PoseHypothesis> = None;
    for p in poses {
        if best.is_none_or(|b| p.confidence > b.confidence) {
            best = Some(p);
        }
    }
    best.copied()
}

/// Sample `n_noises` NOCS maps, register each and keep the most confident pose.
pub fn estimate(req: &InferenceRequest, model: &PoseModel, opts: &EstimateOptions) -> Result<InferenceResult> {
    if req.depth.is_none() {
        return Err(Error::invalid("registration needs a depth image"));
    }
    opts.robust.validate()?;
    let noise_bound = resolve_noise_bound(req, opts.noise_bound)?;
    let (maps, bbox, modalities) = sample_hypotheses(req, model, opts)?;
    let (best, hypotheses) = register_hypotheses(req, maps, &opts.robust, noise_bound)?;
    Ok(InferenceResult {
        best,
        hypotheses,
        bbox,
        noise_bound,
        modalities,
    })
}

/// `R_i · probe` for each hypothesis (probe normalized).
pub fn rotation_spread(hypotheses: &[PoseHypothesis], probe: &Vector3<f64>) -> Vec<Vector3<f64>> {
    let p = probe.normalize();
    hypotheses.iter().map(|h| h.transform.rotation() * p).collect()
}

/// Map every foreground NOCS value through `transform` (after centering at 0.5).
pub fn complete_point_cloud(nocs: &NocsMap, transform: &SimilarityTransform) -> PointCloud {
    let points = nocs
        .values()
        .as_slice()
        .iter()
        .zip(nocs.mask().as_slice())
        .filter(|(_, &m)| m)
        .map(|(v, _)| transform.apply(&Vector3::new(v[0] as f64 - 0.5, v[1] as f64 - 0.5, v[2] as f64 - 0.5)))
        .collect();
    PointCloud::new(points)
}
