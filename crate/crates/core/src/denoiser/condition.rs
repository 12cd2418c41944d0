use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::layers::Tensor;
use super::scalar::Float;
use super::unet::{NetInput, BASE_INPUT_CHANNELS};
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::geometry::{NormalMap, RgbImage};

/// One of the four droppable conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Normal,
    Rgb,
    Feat,
    Category,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::Normal, Modality::Rgb, Modality::Feat, Modality::Category];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Normal => "normal",
            Modality::Rgb => "rgb",
            Modality::Feat => "feat",
            Modality::Category => "category",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Modality::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown modality {s:?} (expected normal, rgb, feat, category)")))
    }
}

/// Parse a comma-separated modality list such as `normal,rgb,feat`.
pub fn parse_modalities(s: &str) -> Result<Vec<Modality>> {
    let mut out: Vec<Modality> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

/// Conditioning inputs at the network's square size. `None` is the null encoding:
/// all-zero image channels, or category id 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConditionSet {
    pub normal: Option<NormalMap>,
    pub rgb: Option<RgbImage>,
    pub feat: Option<FeatureMap>,
    /// Category id, `1..=categories`; id 0 is reserved for "unknown".
    pub category: Option<usize>,
}

impl ConditionSet {
    pub fn category_id(&self) -> usize {
        self.category.unwrap_or(0)
    }

    pub fn has(&self, m: Modality) -> bool {
        match m {
            Modality::Normal => self.normal.is_some(),
            Modality::Rgb => self.rgb.is_some(),
            Modality::Feat => self.feat.is_some(),
            Modality::Category => self.category.is_some(),
        }
    }

    pub fn drop(&mut self, m: Modality) {
        match m {
            Modality::Normal => self.normal = None,
            Modality::Rgb => self.rgb = None,
            Modality::Feat => self.feat = None,
            Modality::Category => self.category = None,
        }
    }

    /// Keep only the listed modalities.
    pub fn restricted(&self, keep: &[Modality]) -> ConditionSet {
        let mut out = self.clone();
        for m in Modality::ALL {
            if !keep.contains(&m) {
                out.drop(m);
            }
        }
        out
    }

    /// Check that every present image is `size x size` and features have `feat_channels`.
    pub fn validate(&self, size: usize, feat_channels: usize) -> Result<()> {
        let dims = [
            self.normal.as_ref().map(|g| ("normal", g.width(), g.height())),
            self.rgb.as_ref().map(|g| ("rgb", g.width(), g.height())),
            self.feat.as_ref().map(|f| ("feat", f.width(), f.height())),
        ];
        for (name, w, h) in dims.into_iter().flatten() {
            if w != size || h != size {
                return Err(Error::shape(format!("{name} condition is {w}x{h}, network expects {size}x{size}")));
            }
        }
        if let Some(f) = &self.feat {
            if f.dim() != feat_channels {
                return Err(Error::shape(format!(
                    "feature condition has {} channels, network expects {feat_channels}",
                    f.dim()
                )));
            }
        }
        Ok(())
    }

    /// Write condition planes for batch entry `b` into channels `3..` of `x`.
    fn write_planes<T: Float>(&self, x: &mut Tensor<T>, b: usize) {
        let hw = x.h * x.w;
        let mut put = |c: usize, i: usize, v: f32| {
            x.data[(c * x.b + b) * hw + i] = T::from_f64(v as f64);
        };
        if let Some(n) = &self.normal {
            for (i, p) in n.as_slice().iter().enumerate() {
                for k in 0..3 {
                    put(3 + k, i, p[k]);
                }
            }
        }
        if let Some(rgb) = &self.rgb {
            for (i, p) in rgb.as_slice().iter().enumerate() {
                for k in 0..3 {
                    put(6 + k, i, p[k]);
                }
            }
        }
        if let Some(f) = &self.feat {
            let d = f.dim();
            for (i, px) in f.as_slice().chunks(d).enumerate() {
                for (k, &v) in px.iter().enumerate() {
                    put(BASE_INPUT_CHANNELS + k, i, v);
                }
            }
        }
    }
}

/// Build the network input from per-sample noisy signals laid out `(channel, y, x)`.
pub fn assemble_input<T: Float>(
    noisy: &[&[T]],
    conds: &[&ConditionSet],
    steps: &[usize],
    size: usize,
    feat_channels: usize,
) -> Result<NetInput<T>> {
    let batch = noisy.len();
    if conds.len() != batch || steps.len() != batch {
        return Err(Error::shape("noisy inputs, conditions and timesteps differ in count"));
    }
    let hw = size * size;
    let mut x = Tensor::zeros(BASE_INPUT_CHANNELS + feat_channels, batch, size, size);
    for (b, (sig, cond)) in noisy.iter().zip(conds).enumerate() {
        if sig.len() != 3 * hw {
            return Err(Error::shape(format!("noisy input has {} values, expected {}", sig.len(), 3 * hw)));
        }
        cond.validate(size, feat_channels)?;
        for c in 0..3 {
            x.data[(c * batch + b) * hw..(c * batch + b + 1) * hw].copy_from_slice(&sig[c * hw..(c + 1) * hw]);
        }
        cond.write_planes(&mut x, b);
    }
    Ok(NetInput {
        x,
        steps: steps.to_vec(),
        categories: conds.iter().map(|c| c.category_id()).collect(),
    })
}
