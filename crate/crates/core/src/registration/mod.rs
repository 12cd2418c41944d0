//! Robust similarity-transform estimation between centered NOCS points and
//! observed camera-frame points, with inlier-rate confidence.

mod correspondences;
mod robust;
mod umeyama;

pub use correspondences::{build_correspondences, CorrespondenceSet};
pub use robust::{inlier_rate, robust_register, PoseHypothesis, RobustParams};
pub use umeyama::{umeyama, weighted_rotation};
