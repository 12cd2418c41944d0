//! End-to-end inference: condition preparation, multi-noise NOCS sampling,
//! per-hypothesis registration and confidence-based selection. Also prepares
//! training samples with the same cropping and encoding.

mod conditions;
mod estimate;
mod model;
mod training;

pub use conditions::{
    crop_features, crop_inputs, prepare_conditions, project_features, raw_features, CroppedInputs, InferenceRequest,
    PreparedConditions, DEFAULT_BBOX_MARGIN, DEFAULT_NOISES,
};
pub use estimate::{
    complete_point_cloud, estimate, hypothesis_seed, register_hypotheses, resolve_noise_bound, rotation_spread,
    sample_hypotheses, select_best, EstimateOptions, Hypothesis, InferenceResult, NoiseBound, SampledNocs,
};
pub use model::PoseModel;
pub use training::{augment_sample, batch_sampler, build_training_set, holdout_split, TrainingSet, PCA_FIT_ROWS};
