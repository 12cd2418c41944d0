use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{RigidPose, SimilarityTransform};

/// Relative singular-value floor below which a point set counts as collinear.
const RANK_TOL: f64 = 1e-10;

fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

/// Rotation `R` minimizing `Σ w_i |v_i − R u_i|²` (reflection-corrected SVD).
pub fn weighted_rotation(u: &[Vector3<f64>], v: &[Vector3<f64>], w: &[f64]) -> Matrix3<f64> {
    let mut h = Matrix3::zeros();
    for ((a, b), &wi) in u.iter().zip(v).zip(w) {
        h += wi * b * a.transpose();
    }
    rotation_from_cross_covariance(&h)
}

fn rotation_from_cross_covariance(h: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * vt
}

/// Closed-form least-squares similarity `dst ≈ s·R·src + t`.
pub fn umeyama(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<SimilarityTransform> {
    if src.len() != dst.len() {
        return Err(Error::shape("source and destination differ in length"));
    }
    if src.len() < 3 {
        return Err(Error::InsufficientCorrespondences(src.len()));
    }
    let n = src.len() as f64;
    let (ma, mb) = (centroid(src), centroid(dst));
    let mut var_a = 0.0;
    let mut cov_a = Matrix3::zeros();
    let mut sigma = Matrix3::zeros();
    for (a, b) in src.iter().zip(dst) {
        let (da, db) = (a - ma, b - mb);
        var_a += da.norm_squared();
        cov_a += da * da.transpose();
        sigma += db * da.transpose();
    }
    var_a /= n;
    sigma /= n;
    let sv = cov_a.symmetric_eigenvalues();
    let mut s = [sv[0].abs(), sv[1].abs(), sv[2].abs()];
    s.sort_by(|a, b| b.total_cmp(a));
    if !(s[0] > 0.0) || s[1] <= RANK_TOL * s[0] {
        return Err(Error::DegenerateConfiguration("source points are collinear or coincident".into()));
    }
    let svd = sigma.svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = u * d * vt;
    let trace: f64 = (0..3).map(|i| svd.singular_values[i] * d[(i, i)]).sum();
    let scale = trace / var_a;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::DegenerateConfiguration(format!("non-positive scale {scale}")));
    }
    let translation = mb - scale * rotation * ma;
    SimilarityTransform::new(scale, RigidPose::new(rotation, translation))
}
