use serde::{Deserialize, Serialize};

/// Where a feature map came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    StandIn,
    ExternalFile,
    Projected,
}

/// `height x width` grid of `dim`-vectors, stored pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    width: usize,
    height: usize,
    dim: usize,
    data: Vec<f32>,
    provenance: Provenance,
}

impl FeatureMap {
    pub fn zeros(width: usize, height: usize, dim: usize, provenance: Provenance) -> Self {
        Self {
            width,
            height,
            dim,
            data: vec![0.0; width * height * dim],
            provenance,
        }
    }

    pub fn from_vec(
        width: usize,
        height: usize,
        dim: usize,
        data: Vec<f32>,
        provenance: Provenance,
    ) -> crate::Result<Self> {
        if dim == 0 || data.len() != width * height * dim {
            return Err(crate::Error::ShapeMismatch(format!(
                "feature map {width}x{height}x{dim} needs {} values, got {}",
                width * height * dim,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(crate::Error::InvalidArgument("non-finite feature value".into()));
        }
        Ok(Self {
            width,
            height,
            dim,
            data,
            provenance,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.dim;
        &self.data[i..i + self.dim]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * self.dim;
        &mut self.data[i..i + self.dim]
    }

    /// Channel `k` as a row-major plane.
    pub fn channel(&self, k: usize) -> Vec<f32> {
        self.data.iter().skip(k).step_by(self.dim).copied().collect()
    }
}

/// Nearest-neighbor resize; output pixel `i` reads source `floor((i + 0.5) * src / dst)`.
pub fn nearest_resize(fm: &FeatureMap, width: usize, height: usize) -> crate::Result<FeatureMap> {
    if width == 0 || height == 0 {
        return Err(crate::Error::InvalidArgument("resize target must be positive".into()));
    }
    let mut out = FeatureMap::zeros(width, height, fm.dim, fm.provenance);
    for j in 0..height {
        let sy = (((j as f64 + 0.5) * fm.height as f64 / height as f64) as usize).min(fm.height - 1);
        for i in 0..width {
            let sx = (((i as f64 + 0.5) * fm.width as f64 / width as f64) as usize).min(fm.width - 1);
            out.pixel_mut(i, j).copy_from_slice(fm.pixel(sx, sy));
        }
    }
    Ok(out)
}
