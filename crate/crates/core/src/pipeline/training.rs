use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::conditions::{crop_inputs, project_features, CroppedInputs, InferenceRequest};
use crate::denoiser::{ConditionSet, TrainingSample};
use crate::error::{Error, Result};
use crate::features::{pca_fit, standin_features, FeatureMap, PcaBasis, Provenance};
use crate::geometry::{crop_warp_resize, Grid, Intrinsics, NocsMap, Resampling, RigidPose, NOCS_BACKGROUND};
use crate::synthgen::{inplane_rotate, phong_relight, AugmentParams, RenderOutput, ViewTuple};

/// Upper bound on foreground feature rows used to fit the PCA basis.
pub const PCA_FIT_ROWS: usize = 200_000;

/// Training samples at the network size with the feature basis fitted on them.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub samples: Vec<TrainingSample>,
    pub pca: Option<PcaBasis>,
}

struct PreparedView {
    crop: CroppedInputs,
    target: NocsMap,
    raw: Option<FeatureMap>,
    category: Option<usize>,
}

fn prepare_view(view: &RenderOutput, intr: Intrinsics, size: usize, with_features: bool) -> Result<PreparedView> {
    let req = InferenceRequest::from_render(view, intr);
    let crop = crop_inputs(&req, size)?;
    let values = crop_warp_resize(view.nocs.values(), &crop.bbox, size, NOCS_BACKGROUND, Resampling::Nearest)?;
    let target = NocsMap::new(values, crop.mask.clone())?;
    let raw = match (&crop.rgb, with_features) {
        (Some(rgb), true) => Some(standin_features(rgb)),
        _ => None,
    };
    Ok(PreparedView {
        crop,
        target,
        raw,
        category: req.category,
    })
}

/// Crop every view to `size`, fit a `feat_channels`-component basis on all
/// foreground stand-in features (subsampled evenly to [`PCA_FIT_ROWS`]) and encode.
pub fn build_training_set(views: &[&RenderOutput], intr: Intrinsics, size: usize, feat_channels: usize) -> Result<TrainingSet> {
    if views.is_empty() {
        return Err(Error::invalid("no training views"));
    }
    let with_features = feat_channels > 0;
    let prepared: Vec<PreparedView> = views
        .par_iter()
        .map(|v| prepare_view(v, intr, size, with_features))
        .collect::<Result<_>>()?;
    let pca = if with_features {
        let total: usize = prepared.iter().map(|p| p.target.foreground_count()).sum();
        let stride = total.div_ceil(PCA_FIT_ROWS).max(1);
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(total / stride + 1);
        let mut counter = 0usize;
        for p in &prepared {
            let raw = p.raw.as_ref().ok_or_else(|| Error::invalid("feature channels need rgb views"))?;
            for y in 0..size {
                for x in 0..size {
                    if *p.crop.mask.get(x, y) {
                        if counter.is_multiple_of(stride) {
                            rows.push(raw.pixel(x, y).iter().map(|&v| v as f64).collect());
                        }
                        counter += 1;
                    }
                }
            }
        }
        Some(pca_fit(&rows, feat_channels)?)
    } else {
        None
    };
    let samples = prepared
        .into_par_iter()
        .map(|p| {
            let feat = match &p.raw {
                Some(raw) => Some(project_features(raw, feat_channels, pca.as_ref(), &p.crop.mask)?),
                None => None,
            };
            Ok(TrainingSample {
                cond: ConditionSet {
                    normal: p.crop.normals,
                    rgb: p.crop.rgb,
                    feat,
                    category: p.category,
                },
                target: p.target,
            })
        })
        .collect::<Result<_>>()?;
    Ok(TrainingSet { samples, pca })
}

/// Random in-plane rotation of every image, then Phong relighting of the rgb.
pub fn augment_sample(sample: &TrainingSample, params: &AugmentParams, rng: &mut impl Rng) -> Result<TrainingSample> {
    let s = sample.target.width();
    let tuple = ViewTuple {
        rgb: sample.cond.rgb.clone().unwrap_or_else(|| Grid::new(s, s, [1.0; 3])),
        normals: sample.cond.normal.clone().unwrap_or_else(|| Grid::new(s, s, [0.0; 3])),
        nocs: sample.target.clone(),
        features: sample.cond.feat.clone(),
        camera: RigidPose::identity(),
    };
    let angle = params.sample_angle(rng);
    let light = params.sample_lighting(rng);
    let rotated = inplane_rotate(&tuple, angle)?;
    let rgb = match (&sample.cond.rgb, &sample.cond.normal) {
        (Some(_), Some(_)) => Some(phong_relight(&rotated.rgb, &rotated.normals, light.ambient, light.diffuse, &light.direction)?),
        (Some(_), None) => Some(rotated.rgb),
        _ => None,
    };
    Ok(TrainingSample {
        cond: ConditionSet {
            normal: sample.cond.normal.as_ref().map(|_| rotated.normals),
            rgb,
            feat: rotated.features.map(|f| relabel(f, Provenance::Projected)),
            category: sample.cond.category,
        },
        target: rotated.nocs,
    })
}

fn relabel(f: FeatureMap, p: Provenance) -> FeatureMap {
    if f.provenance() == p {
        f
    } else {
        let (w, h, d) = (f.width(), f.height(), f.dim());
        FeatureMap::from_vec(w, h, d, f.as_slice().to_vec(), p).unwrap_or(f)
    }
}

/// Batches drawn uniformly with replacement, augmented when `augment` is set.
pub fn batch_sampler<'a>(
    samples: &'a [TrainingSample],
    augment: Option<AugmentParams>,
) -> impl FnMut(&mut ChaCha8Rng, usize) -> Result<Vec<TrainingSample>> + 'a {
    move |rng, n| {
        if samples.is_empty() {
            return Err(Error::invalid("no training samples"));
        }
        (0..n)
            .map(|_| {
                let s = &samples[rng.random_range(0..samples.len())];
                match &augment {
                    Some(a) => augment_sample(s, a, rng),
                    None => Ok(s.clone()),
                }
            })
            .collect()
    }
}

/// Deterministic split of `0..n` into `(train, held_out)` with `held_out` of size `k`, both sorted.
pub fn holdout_split(n: usize, k: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if k > n {
        return Err(Error::invalid(format!("cannot hold out {k} of {n} views")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut held = idx[..k].to_vec();
    let mut train = idx[k..].to_vec();
    held.sort_unstable();
    train.sort_unstable();
    Ok((train, held))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mask_count;
    use crate::synthgen::{generate_builtin, GenerateOptions};

    fn views() -> (Vec<RenderOutput>, Intrinsics) {
        let opts = GenerateOptions {
            categories: vec!["cup".into()],
            models_per_category: 1,
            subdiv: 0,
            image_size: 32,
            ..GenerateOptions::default()
        };
        let (_, v) = generate_builtin(&opts).unwrap();
        (v.into_iter().map(|d| d.render).collect(), Intrinsics::square_default(32))
    }

    #[test]
    fn training_set_has_full_conditions_and_matching_masks() {
        let (v, intr) = views();
        let refs: Vec<&RenderOutput> = v.iter().collect();
        let set = build_training_set(&refs, intr, 16, 3).unwrap();
        assert_eq!(set.samples.len(), 12);
        assert_eq!(set.pca.as_ref().unwrap().output_dim(), 3);
        for s in &set.samples {
            s.cond.validate(16, 3).unwrap();
            assert!(s.cond.normal.is_some() && s.cond.rgb.is_some() && s.cond.feat.is_some());
            assert_eq!(s.cond.category, Some(1));
            assert!(mask_count(s.target.mask()) > 0);
        }
    }

    #[test]
    fn augmentation_keeps_shapes_and_nocs_values() {
        let (v, intr) = views();
        let set = build_training_set(&[&v[0]], intr, 16, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = augment_sample(&set.samples[0], &AugmentParams::default(), &mut rng).unwrap();
        a.cond.validate(16, 2).unwrap();
        let before: Vec<[f32; 3]> = fg_values(&set.samples[0].target);
        for val in fg_values(&a.target) {
            assert!(before.contains(&val));
        }
    }

    fn fg_values(n: &NocsMap) -> Vec<[f32; 3]> {
        n.values().as_slice().iter().zip(n.mask().as_slice()).filter(|(_, &m)| m).map(|(v, _)| *v).collect()
    }

    #[test]
    fn holdout_is_a_partition() {
        let (train, held) = holdout_split(50, 7, 1).unwrap();
        assert_eq!(held.len(), 7);
        let mut all: Vec<usize> = train.iter().chain(&held).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert_eq!(holdout_split(50, 7, 1).unwrap().1, held);
        assert!(holdout_split(3, 4, 0).is_err());
    }
}
