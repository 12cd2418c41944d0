use nalgebra::{Matrix3, Vector3};

use super::icosphere::icosphere_directions;
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, RigidPose};

/// World→camera pose for a camera at `radius * direction` looking at the origin.
///
/// Camera axes: x right, y down, z forward. The up vector is `world_up`
/// orthogonalized against the optical axis; when the two are parallel the
/// world x-axis is used instead.
pub fn look_at_pose(direction: &Vector3<f64>, radius: f64, world_up: &Vector3<f64>) -> RigidPose {
    let d = direction.normalize();
    let forward = -d;
    let mut up = world_up - forward * world_up.dot(&forward);
    if up.norm() < 1e-9 {
        let fallback = Vector3::x();
        up = fallback - forward * fallback.dot(&forward);
    }
    let up = up.normalize();
    let y_axis = -up;
    let x_axis = y_axis.cross(&forward);
    let rotation = Matrix3::from_rows(&[
        x_axis.transpose(),
        y_axis.transpose(),
        forward.transpose(),
    ]);
    let center = d * radius;
    RigidPose::new(rotation, -(rotation * center))
}

/// Cameras on a sphere around the object, sharing one set of intrinsics.
#[derive(Debug, Clone)]
pub struct CameraRig {
    pub poses: Vec<RigidPose>,
    pub intrinsics: Intrinsics,
    pub radius: f64,
}

impl CameraRig {
    pub fn icosphere(subdiv: u32, radius: f64, intrinsics: Intrinsics) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::invalid("orbit radius must be positive"));
        }
        let up = Vector3::y();
        let poses = icosphere_directions(subdiv)?
            .iter()
            .map(|d| look_at_pose(d, radius, &up))
            .collect();
        Ok(Self {
            poses,
            intrinsics,
            radius,
        })
    }

    pub fn camera_center(pose: &RigidPose) -> Vector3<f64> {
        -(pose.rotation.transpose() * pose.translation)
    }
}
