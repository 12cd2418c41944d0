//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{Matrix3, UnitQuaternion, Vector3, Vector4};
use nocs_pose::geometry::{RigidPose, SimilarityTransform};
use nocs_pose::registration::{umeyama, CorrespondenceSet};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let q = Vector4::from_fn(|_, _| StandardNormal.sample(rng));
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::from_vector(q)).to_rotation_matrix().into_inner()
}

pub fn geodesic_deg(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let c = (((a * b.transpose()).trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    c.acos().to_degrees()
}

pub struct RegistrationInstance {
    pub corrs: CorrespondenceSet,
    pub truth: SimilarityTransform,
    pub inlier_mask: Vec<bool>,
}

/// Inliers `s·R·a + t + N(0, σ²)`; outliers uniform in the inliers' bounding box.
pub fn registration_instance(
    rng: &mut impl Rng,
    n: usize,
    outlier_fraction: f64,
    sigma: f64,
    scale: f64,
) -> RegistrationInstance {
    let r = random_rotation(rng);
    let t = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(1.0..3.0));
    let truth = SimilarityTransform::new(scale, RigidPose::new(r, t)).unwrap();
    let src: Vec<Vector3<f64>> = (0..n).map(|_| Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5))).collect();
    let clean: Vec<Vector3<f64>> = src.iter().map(|a| truth.apply(a)).collect();
    let mut lo = clean[0];
    let mut hi = clean[0];
    for p in &clean {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let n_out = (outlier_fraction * n as f64).round() as usize;
    let mut dst = Vec::with_capacity(n);
    let mut inlier_mask = Vec::with_capacity(n);
    for (i, c) in clean.iter().enumerate() {
        if i < n_out {
            dst.push(Vector3::from_fn(|k, _| rng.random_range(lo[k]..hi[k])));
            inlier_mask.push(false);
        } else {
            let noise = Vector3::from_fn(|_, _| { let z: f64 = StandardNormal.sample(rng); sigma * z });
            dst.push(c + noise);
            inlier_mask.push(true);
        }
    }
    RegistrationInstance {
        corrs: CorrespondenceSet::new(src, dst).unwrap(),
        truth,
        inlier_mask,
    }
}

pub fn inlier_set(corrs: &CorrespondenceSet, t: &SimilarityTransform, eps: f64) -> Vec<usize> {
    (0..corrs.len())
        .filter(|&i| (corrs.dst[i] - t.apply(&corrs.src[i])).norm() <= eps)
        .collect()
}

/// Plain RANSAC over minimal 3-point samples followed by one least-squares refit.
pub fn ransac_oracle(corrs: &CorrespondenceSet, eps: f64, samples: usize, rng: &mut impl Rng) -> (SimilarityTransform, Vec<usize>) {
    let n = corrs.len();
    let mut best: Option<(SimilarityTransform, usize)> = None;
    for _ in 0..samples {
        let idx = rand::seq::index::sample(rng, n, 3);
        let a: Vec<_> = idx.iter().map(|i| corrs.src[i]).collect();
        let b: Vec<_> = idx.iter().map(|i| corrs.dst[i]).collect();
        let Ok(t) = umeyama(&a, &b) else { continue };
        let count = (0..n).filter(|&i| (corrs.dst[i] - t.apply(&corrs.src[i])).norm() <= eps).count();
        if best.as_ref().is_none_or(|(_, c)| count > *c) {
            best = Some((t, count));
        }
    }
    let (mut t, _) = best.expect("at least one non-degenerate sample");
    let set = inlier_set(corrs, &t, eps);
    let a: Vec<_> = set.iter().map(|&i| corrs.src[i]).collect();
    let b: Vec<_> = set.iter().map(|&i| corrs.dst[i]).collect();
    if let Ok(refit) = umeyama(&a, &b) {
        if inlier_set(corrs, &refit, eps).len() >= set.len() {
            t = refit;
        }
    }
    let set = inlier_set(corrs, &t, eps);
    (t, set)
}

/// `|A Δ B| / |A ∪ B|` for sorted index lists.
pub fn symmetric_difference_ratio(a: &[usize], b: &[usize]) -> f64 {
    use std::collections::BTreeSet;
    let sa: BTreeSet<_> = a.iter().collect();
    let sb: BTreeSet<_> = b.iter().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 0.0;
    }
    sa.symmetric_difference(&sb).count() as f64 / union as f64
}
