use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nocs_pose::denoiser::{ScheduleConfig, TrainConfig, UNetConfig};
use nocs_pose::registration::RobustParams;
use nocs_pose::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// `builtin` or a directory of `<category>/<model>.obj` files.
    pub shapes: String,
    pub categories: Vec<String>,
    pub models_per_category: usize,
    pub subdiv: u32,
    pub size: usize,
    pub radius_factor: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            shapes: "builtin".into(),
            categories: vec!["cup".into(), "laptop".into()],
            models_per_category: 3,
            subdiv: 2,
            size: 64,
            radius_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSection {
    pub enabled: bool,
    pub angle_range: [f64; 2],
    pub ambient_range: [f32; 2],
    pub diffuse_range: [f32; 2],
}

impl Default for AugmentSection {
    fn default() -> Self {
        let d = nocs_pose::synthgen::AugmentParams::default();
        Self {
            enabled: true,
            angle_range: [d.angle_range.0, d.angle_range.1],
            ambient_range: [d.ambient_range.0, d.ambient_range.1],
            diffuse_range: [d.diffuse_range.0, d.diffuse_range.1],
        }
    }
}

impl AugmentSection {
    pub fn params(&self) -> Option<nocs_pose::synthgen::AugmentParams> {
        self.enabled.then(|| nocs_pose::synthgen::AugmentParams {
            angle_range: (self.angle_range[0], self.angle_range[1]),
            ambient_range: (self.ambient_range[0], self.ambient_range[1]),
            diffuse_range: (self.diffuse_range[0], self.diffuse_range[1]),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferSection {
    pub n_noises: usize,
    pub sample_steps: usize,
    /// `fast` or `ancestral`.
    pub mode: String,
    /// Registration noise bound as a fraction of the observed cloud's diagonal.
    pub noise_bound_ratio: f64,
}

impl Default for InferSection {
    fn default() -> Self {
        Self {
            n_noises: nocs_pose::pipeline::DEFAULT_NOISES,
            sample_steps: 10,
            mode: "fast".into(),
            noise_bound_ratio: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// `deg:dist` pairs, distance in `unit_label` units.
    pub thresholds: String,
    /// Size of one `unit_label` in scene units.
    pub unit: f64,
    pub unit_label: String,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            thresholds: "5:5,10:5,15:5".into(),
            unit: 0.01,
            unit_label: "cm".into(),
        }
    }
}

/// Whole-run configuration; every section is optional in the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub data: DataSection,
    pub model: UNetConfig,
    pub schedule: ScheduleConfig,
    pub train: TrainConfig,
    pub augment: AugmentSection,
    pub robust: RobustParams,
    pub infer: InferSection,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text).map_err(|e| match e {
            Error::InvalidArgument(m) => Error::InvalidArgument(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {}", e.message())))
    }

    /// Range checks that do not depend on which command runs.
    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.size < 8 {
            return Err(Error::InvalidArgument(format!("data.size {} is below 8", d.size)));
        }
        if d.models_per_category == 0 || d.categories.is_empty() {
            return Err(Error::InvalidArgument("data needs at least one category and model".into()));
        }
        if !(d.radius_factor > 0.5 && d.radius_factor.is_finite()) {
            return Err(Error::InvalidArgument(format!("data.radius_factor {} must exceed 0.5", d.radius_factor)));
        }
        self.train.validate()?;
        nocs_pose::denoiser::NoiseSchedule::from_config(&self.schedule)?;
        self.robust.validate()?;
        if let Some(a) = self.augment.params() {
            a.validate()?;
        }
        let i = &self.infer;
        if i.n_noises == 0 || i.sample_steps == 0 || i.sample_steps > self.schedule.steps {
            return Err(Error::InvalidArgument("infer.n_noises and infer.sample_steps must be in range".into()));
        }
        parse_mode(&i.mode)?;
        if !(i.noise_bound_ratio > 0.0 && i.noise_bound_ratio.is_finite()) {
            return Err(Error::InvalidArgument("infer.noise_bound_ratio must be positive".into()));
        }
        if !(self.eval.unit > 0.0) {
            return Err(Error::InvalidArgument("eval.unit must be positive".into()));
        }
        nocs_pose::eval::parse_thresholds(&self.eval.thresholds, self.eval.unit)?;
        Ok(())
    }
}

pub fn parse_mode(s: &str) -> Result<nocs_pose::denoiser::SampleMode> {
    match s {
        "fast" => Ok(nocs_pose::denoiser::SampleMode::Fast),
        "ancestral" => Ok(nocs_pose::denoiser::SampleMode::Ancestral),
        other => Err(Error::InvalidArgument(format!("unknown sampling mode '{other}' (fast or ancestral)"))),
    }
}
