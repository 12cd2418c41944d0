//! Synthetic training data: viewpoint sampling, ray-cast rendering, augmentation
//! and the on-disk dataset layout.

mod augment;
mod camera;
pub mod dataset;
mod generate;
mod icosphere;
mod render;
pub mod shapes;

pub use augment::{inplane_rotate, phong_relight, AugmentParams, ViewTuple};
pub use camera::{look_at_pose, CameraRig};
pub use dataset::{read_dataset, write_dataset, Dataset, DatasetView, Manifest};
pub use generate::{builtin_models, generate, generate_builtin, GenerateOptions, SourceModel};
pub use icosphere::{icosphere_directions, MAX_SUBDIVISION};
pub use render::{render_view, Lighting, RenderOutput};
