use std::path::Path;

use super::conditions::{prepare_conditions, InferenceRequest, PreparedConditions};
use crate::denoiser::{Checkpoint, NoiseSchedule, UNetParams};
use crate::error::{Error, Result};
use crate::features::PcaBasis;

/// A trained denoiser with its schedule, feature basis and category names.
#[derive(Debug, Clone)]
pub struct PoseModel {
    pub params: UNetParams<f32>,
    pub schedule: NoiseSchedule,
    pub pca: Option<PcaBasis>,
    /// Names for category ids `1..`.
    pub category_names: Vec<String>,
}

impl PoseModel {
    pub fn new(
        params: UNetParams<f32>,
        schedule: NoiseSchedule,
        pca: Option<PcaBasis>,
        category_names: Vec<String>,
    ) -> Result<Self> {
        let cfg = params.config();
        if let Some(b) = &pca {
            if b.output_dim() != cfg.feat_channels {
                return Err(Error::shape(format!(
                    "PCA basis has {} components, network expects {} feature channels",
                    b.output_dim(),
                    cfg.feat_channels
                )));
            }
        }
        if category_names.len() > cfg.categories {
            return Err(Error::shape(format!(
                "{} category names for a {}-category embedding",
                category_names.len(),
                cfg.categories
            )));
        }
        Ok(Self {
            params,
            schedule,
            pca,
            category_names,
        })
    }

    pub fn image_size(&self) -> usize {
        self.params.config().image_size
    }

    pub fn feat_channels(&self) -> usize {
        self.params.config().feat_channels
    }

    /// Id `1..` of a category name.
    pub fn category_id(&self, name: &str) -> Option<usize> {
        self.category_names.iter().position(|n| n == name).map(|i| i + 1)
    }

    pub fn prepare(&self, req: &InferenceRequest) -> Result<PreparedConditions> {
        prepare_conditions(req, self.image_size(), self.feat_channels(), self.pca.as_ref())
    }

    /// Write the checkpoint and, when present, the PCA basis as `<stem>.pca.json` next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let pca_name = match &self.pca {
            Some(b) => {
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
                let name = format!("{stem}.pca.json");
                let pca_path = path.with_file_name(&name);
                let json = serde_json::to_string_pretty(b)
                    .map_err(|e| Error::format(&pca_path, e.to_string()))?;
                std::fs::write(&pca_path, json).map_err(|e| Error::io(&pca_path, e))?;
                Some(name)
            }
            None => None,
        };
        Checkpoint {
            params: self.params.clone(),
            schedule: self.schedule.config(),
            category_names: self.category_names.clone(),
            pca_basis: pca_name,
        }
        .save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt = Checkpoint::load(path)?;
        let pca = match &ckpt.pca_basis {
            Some(name) => {
                let pca_path = path.parent().unwrap_or(Path::new(".")).join(name);
                let text = std::fs::read_to_string(&pca_path).map_err(|e| Error::io(&pca_path, e))?;
                let basis: PcaBasis =
                    serde_json::from_str(&text).map_err(|e| Error::format(&pca_path, e.to_string()))?;
                Some(basis)
            }
            None => None,
        };
        let schedule = NoiseSchedule::from_config(&ckpt.schedule)?;
        Self::new(ckpt.params, schedule, pca, ckpt.category_names)
    }
}
