//! Dense per-pixel feature channel.
//!
//! Raw high-dimensional features (from the built-in stand-in extractor or an
//! external file) are compressed with PCA, rescaled per channel to `[0,1]`
//! over the foreground, and resized with nearest-neighbor sampling.

mod file;
mod map;
mod pca;
mod standin;

pub use file::{read_feature_file, write_feature_file, FEATURE_FILE_MAGIC};
pub use map::{nearest_resize, FeatureMap, Provenance};
pub use pca::{pca_apply, pca_fit, pca_project, PcaBasis};
pub use standin::{standin_features, STANDIN_DIM, STANDIN_SYMMETRIC_CHANNELS};
