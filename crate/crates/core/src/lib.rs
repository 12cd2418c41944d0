//! Category-level object pose estimation from dense canonical-coordinate maps
//! predicted by a conditional diffusion model.

mod error;
pub mod denoiser;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod pipeline;
pub mod registration;
pub mod synthgen;

pub use error::{Error, Result};
