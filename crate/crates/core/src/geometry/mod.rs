//! Canonical coordinate conventions, depth geometry and square crop/warp.
//!
//! Canonical object points live in `[-0.5, 0.5]^3` (bounding-box diagonal 1,
//! centered); their NOCS value is `p + 0.5`. Camera frames follow the usual
//! vision convention: x right, y down, z forward.

mod depth;
mod grid;
pub mod imageio;
mod mesh;
mod types;
mod warp;

pub use depth::{backproject, normals_from_depth};
pub use grid::{mask_count, Grid, Mask, Rgb, RgbImage};
pub use mesh::{canonicalize_mesh, Mesh};
pub use types::{
    axis_angle, is_rotation, BoundingBox, DepthMap, Intrinsics, NocsMap, NormalMap, PointCloud,
    RigidPose, SimilarityTransform, NOCS_BACKGROUND,
};
pub use warp::{crop_warp_resize, unwarp_nocs, Resample, Resampling};
