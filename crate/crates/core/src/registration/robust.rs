//! Outlier-robust similarity registration in three decoupled stages:
//! scale by interval voting over pairwise distance ratios, rotation by
//! graduated non-convexity on truncated least squares over pair differences,
//! translation by per-axis interval voting. A short least-squares polish on the
//! final inlier set follows.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::correspondences::CorrespondenceSet;
use super::umeyama::{umeyama, weighted_rotation};
use crate::error::{Error, Result};
use crate::geometry::{RigidPose, SimilarityTransform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustParams {
    /// Inlier residual bound, scene units.
    pub noise_bound: f64,
    pub max_correspondences: usize,
    /// Factor by which the GNC surrogate parameter grows per iteration.
    pub gnc_factor: f64,
    pub max_gnc_iterations: usize,
    /// Pair subset size for scale voting, as a multiple of the correspondence count.
    pub scale_pairs_per_point: usize,
    pub polish_iterations: usize,
    pub seed: u64,
}

impl Default for RobustParams {
    fn default() -> Self {
        RobustParams {
            noise_bound: 0.01,
            max_correspondences: 512,
            gnc_factor: 1.4,
            max_gnc_iterations: 100,
            scale_pairs_per_point: 4,
            polish_iterations: 3,
            seed: 0,
        }
    }
}

impl RobustParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_bound > 0.0 && self.noise_bound.is_finite()) {
            return Err(Error::invalid(format!("noise bound must be positive, got {}", self.noise_bound)));
        }
        if !(self.gnc_factor > 1.0) {
            return Err(Error::invalid(format!("GNC factor must exceed 1, got {}", self.gnc_factor)));
        }
        if self.max_correspondences < 3 || self.scale_pairs_per_point == 0 {
            return Err(Error::invalid("max_correspondences must be at least 3 and pair count positive"));
        }
        Ok(())
    }
}

/// A registered pose with its inlier-rate confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseHypothesis {
    pub transform: SimilarityTransform,
    /// Fraction of correspondences within the noise bound at `transform`.
    pub confidence: f64,
    pub index: usize,
    /// Fraction of pair-difference vectors accepted by the rotation stage.
    pub rotation_inlier_rate: f64,
}

/// Fraction of pairs with `|dst − (s·R·src + t)| ≤ noise_bound`.
pub fn inlier_rate(corrs: &CorrespondenceSet, transform: &SimilarityTransform, noise_bound: f64) -> f64 {
    if corrs.is_empty() {
        return 0.0;
    }
    inliers(&corrs.src, &corrs.dst, transform, noise_bound).len() as f64 / corrs.len() as f64
}

fn inliers(src: &[Vector3<f64>], dst: &[Vector3<f64>], t: &SimilarityTransform, eps: f64) -> Vec<usize> {
    src.iter()
        .zip(dst)
        .enumerate()
        .filter(|(_, (a, b))| (*b - t.apply(a)).norm() <= eps)
        .map(|(i, _)| i)
        .collect()
}

/// Point covered by the most closed intervals; ties resolve to the smallest such point.
fn max_overlap(intervals: &[(f64, f64)]) -> Option<f64> {
    let mut events: Vec<(f64, i32)> = Vec::with_capacity(2 * intervals.len());
    for &(lo, hi) in intervals {
        events.push((lo, 1));
        events.push((hi, -1));
    }
    // Openings before closings at equal coordinates: closed intervals touch.
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    let (mut count, mut best, mut at) = (0, 0, None);
    for (x, d) in events {
        count += d;
        if count > best {
            best = count;
            at = Some(x);
        }
    }
    at
}

/// Mean of the values whose `±half` interval covers the densest point.
fn vote_component(values: &[f64], half: f64) -> f64 {
    let intervals: Vec<(f64, f64)> = values.iter().map(|&v| (v - half, v + half)).collect();
    let Some(center) = max_overlap(&intervals) else {
        return 0.0;
    };
    let members: Vec<f64> = values.iter().copied().filter(|v| (v - center).abs() <= half).collect();
    members.iter().sum::<f64>() / members.len() as f64
}

struct ScaleEstimate {
    scale: f64,
    pairs: Vec<(usize, usize)>,
}

fn estimate_scale(src: &[Vector3<f64>], dst: &[Vector3<f64>], p: &RobustParams) -> Option<ScaleEstimate> {
    let n = src.len();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let total = n * (n - 1) / 2;
    let wanted = p.scale_pairs_per_point * n;
    let pairs: Vec<(usize, usize)> = if wanted >= total {
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    } else {
        (0..wanted)
            .map(|_| {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                (i.min(j), i.max(j))
            })
            .collect()
    };
    let eps2 = 2.0 * p.noise_bound;
    let mut kept = Vec::new();
    let mut intervals = Vec::new();
    for &(i, j) in &pairs {
        let da = (src[i] - src[j]).norm();
        if da < 1e-9 {
            continue;
        }
        let db = (dst[i] - dst[j]).norm();
        kept.push((i, j, da, db));
        intervals.push(((db - eps2).max(0.0) / da, (db + eps2) / da));
    }
    let center = max_overlap(&intervals)?;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut consensus = Vec::new();
    for (&(i, j, da, db), &(lo, hi)) in kept.iter().zip(&intervals) {
        if lo <= center && center <= hi {
            num += db * da;
            den += da * da;
            consensus.push((i, j));
        }
    }
    let scale = num / den;
    (scale > 0.0 && scale.is_finite()).then_some(ScaleEstimate { scale, pairs: consensus })
}

/// GNC over truncated least squares; returns the rotation and the accepted fraction.
fn estimate_rotation(u: &[Vector3<f64>], v: &[Vector3<f64>], bound: f64, p: &RobustParams) -> (Matrix3<f64>, f64) {
    let c2 = bound * bound;
    let mut w = vec![1.0; u.len()];
    let mut rot = weighted_rotation(u, v, &w);
    let residuals = |r: &Matrix3<f64>| -> Vec<f64> { u.iter().zip(v).map(|(a, b)| (b - r * a).norm_squared()).collect() };
    let mut r2 = residuals(&rot);
    let max_r2 = r2.iter().copied().fold(0.0, f64::max);
    if max_r2 > c2 {
        let mut mu = c2 / (2.0 * max_r2 - c2);
        for _ in 0..p.max_gnc_iterations {
            let mut change = 0.0;
            for (wi, &ri) in w.iter_mut().zip(&r2) {
                let new = if ri >= (mu + 1.0) / mu * c2 {
                    0.0
                } else if ri <= mu / (mu + 1.0) * c2 {
                    1.0
                } else {
                    bound * (mu * (mu + 1.0)).sqrt() / ri.sqrt() - mu
                };
                change += (new - *wi).abs();
                *wi = new;
            }
            if w.iter().sum::<f64>() < 1e-12 {
                break;
            }
            rot = weighted_rotation(u, v, &w);
            r2 = residuals(&rot);
            if change < 1e-6 {
                break;
            }
            mu *= p.gnc_factor;
        }
    }
    let accepted = r2.iter().filter(|&&r| r <= c2).count();
    (rot, accepted as f64 / u.len().max(1) as f64)
}

/// Canonical processing order so results do not depend on input order.
fn canonical_order(corrs: &CorrespondenceSet) -> Vec<usize> {
    let key = |i: usize| {
        let (a, b) = (&corrs.src[i], &corrs.dst[i]);
        [a.x, a.y, a.z, b.x, b.y, b.z]
    };
    let mut idx: Vec<usize> = (0..corrs.len()).collect();
    idx.sort_by(|&i, &j| {
        key(i)
            .iter()
            .zip(key(j).iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    idx
}

pub fn robust_register(corrs: &CorrespondenceSet, params: &RobustParams) -> Result<PoseHypothesis> {
    corrs.validate()?;
    params.validate()?;
    let order = canonical_order(corrs);
    let src: Vec<Vector3<f64>> = order.iter().map(|&i| corrs.src[i]).collect();
    let dst: Vec<Vector3<f64>> = order.iter().map(|&i| corrs.dst[i]).collect();
    let n = src.len();
    let eps = params.noise_bound;
    let failed = |transform: SimilarityTransform| PoseHypothesis {
        transform,
        confidence: 0.0,
        index: 0,
        rotation_inlier_rate: 0.0,
    };

    let Some(scale) = estimate_scale(&src, &dst, params) else {
        return Ok(failed(SimilarityTransform::identity()));
    };
    let s = scale.scale;
    let (u, v): (Vec<_>, Vec<_>) = scale
        .pairs
        .iter()
        .map(|&(i, j)| (src[i] - src[j], (dst[i] - dst[j]) / s))
        .unzip();
    let (rotation, rotation_inlier_rate) = estimate_rotation(&u, &v, 2.0 * eps / s, params);

    let offsets: Vec<Vector3<f64>> = src.iter().zip(&dst).map(|(a, b)| b - s * rotation * a).collect();
    let translation = Vector3::from_fn(|axis, _| {
        let comp: Vec<f64> = offsets.iter().map(|o| o[axis]).collect();
        vote_component(&comp, eps)
    });
    let mut transform = SimilarityTransform::new(s, RigidPose::new(rotation, translation))?;

    let mut set = inliers(&src, &dst, &transform, eps);
    for _ in 0..params.polish_iterations {
        if set.len() < 3 {
            break;
        }
        let a: Vec<_> = set.iter().map(|&i| src[i]).collect();
        let b: Vec<_> = set.iter().map(|&i| dst[i]).collect();
        let Ok(refined) = umeyama(&a, &b) else {
            break;
        };
        let next = inliers(&src, &dst, &refined, eps);
        if next.len() < set.len() {
            break;
        }
        let unchanged = next == set;
        transform = refined;
        set = next;
        if unchanged {
            break;
        }
    }
    if set.len() < 3 {
        return Ok(PoseHypothesis {
            rotation_inlier_rate,
            ..failed(transform)
        });
    }
    Ok(PoseHypothesis {
        transform,
        confidence: set.len() as f64 / n as f64,
        index: 0,
        rotation_inlier_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::axis_angle;

    fn cloud(n: usize, seed: u64) -> Vec<Vector3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5)))
            .collect()
    }

    fn truth() -> SimilarityTransform {
        let r = axis_angle(&Vector3::new(0.3, -1.0, 0.5), 1.1);
        SimilarityTransform::new(2.0, RigidPose::new(r, Vector3::new(0.1, -0.2, 0.3))).unwrap()
    }

    #[test]
    fn max_overlap_finds_densest_point() {
        let iv = [(0.0, 1.0), (0.5, 2.0), (0.9, 1.5), (3.0, 4.0)];
        assert_eq!(max_overlap(&iv), Some(0.9));
        assert_eq!(max_overlap(&[]), None);
    }

    #[test]
    fn noiseless_inliers_match_closed_form() {
        let src = cloud(200, 1);
        let t = truth();
        let dst: Vec<_> = src.iter().map(|p| t.apply(p)).collect();
        let corrs = CorrespondenceSet::new(src.clone(), dst.clone()).unwrap();
        let params = RobustParams {
            noise_bound: 0.01,
            ..Default::default()
        };
        let h = robust_register(&corrs, &params).unwrap();
        let u = umeyama(&src, &dst).unwrap();
        assert_eq!(h.confidence, 1.0);
        assert!((h.transform.scale - u.scale).abs() < 1e-6);
        assert!((h.transform.rotation() - u.rotation()).abs().max() < 1e-6);
        assert!((h.transform.translation() - u.translation()).norm() < 1e-6);
    }

    #[test]
    fn order_does_not_matter() {
        let src = cloud(100, 2);
        let t = truth();
        let mut dst: Vec<_> = src.iter().map(|p| t.apply(p)).collect();
        for (i, d) in dst.iter_mut().enumerate() {
            if i % 3 == 0 {
                *d += Vector3::new(0.5, -0.3, 0.2);
            }
        }
        let params = RobustParams {
            noise_bound: 0.02,
            ..Default::default()
        };
        let a = robust_register(&CorrespondenceSet::new(src.clone(), dst.clone()).unwrap(), &params).unwrap();
        let mut perm: Vec<usize> = (0..100).collect();
        perm.reverse();
        perm.swap(3, 70);
        let ps: Vec<_> = perm.iter().map(|&i| src[i]).collect();
        let pd: Vec<_> = perm.iter().map(|&i| dst[i]).collect();
        let b = robust_register(&CorrespondenceSet::new(ps, pd).unwrap(), &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn extra_rigid_motion_composes() {
        let src = cloud(150, 3);
        let t = truth();
        let dst: Vec<_> = src.iter().map(|p| t.apply(p)).collect();
        let motion = RigidPose::new(axis_angle(&Vector3::new(1.0, 1.0, 0.0), 0.4), Vector3::new(0.5, 0.0, -1.0));
        let moved: Vec<_> = dst.iter().map(|p| motion.apply(p)).collect();
        let params = RobustParams {
            noise_bound: 0.01,
            ..Default::default()
        };
        let a = robust_register(&CorrespondenceSet::new(src.clone(), dst).unwrap(), &params).unwrap();
        let b = robust_register(&CorrespondenceSet::new(src, moved).unwrap(), &params).unwrap();
        let want = a.transform.premultiply(&motion);
        assert!((b.transform.scale - want.scale).abs() < 1e-6);
        assert!((b.transform.rotation() - want.rotation()).abs().max() < 1e-6);
        assert!((b.transform.translation() - want.translation()).norm() < 1e-6);
    }

    #[test]
    fn inlier_rate_counts_within_bound() {
        let src = cloud(10, 4);
        let t = truth();
        let mut dst: Vec<_> = src.iter().map(|p| t.apply(p)).collect();
        let corrs = CorrespondenceSet::new(src.clone(), dst.clone()).unwrap();
        assert_eq!(inlier_rate(&corrs, &t, 0.01), 1.0);
        let shifted = SimilarityTransform::new(t.scale, RigidPose::new(*t.rotation(), t.translation() + Vector3::new(0.1, 0.0, 0.0))).unwrap();
        assert_eq!(inlier_rate(&corrs, &shifted, 0.01), 0.0);
        for d in dst.iter_mut().take(5) {
            *d += Vector3::new(0.0, 0.1, 0.0);
        }
        let half = CorrespondenceSet::new(src, dst).unwrap();
        assert_eq!(inlier_rate(&half, &t, 0.01), 0.5);
    }
}
