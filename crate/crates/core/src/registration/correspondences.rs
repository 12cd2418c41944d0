use nalgebra::Vector3;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{DepthMap, Intrinsics, Mask, NocsMap};

/// Pixel-aligned pairs: centered NOCS coordinates and camera-frame points.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    /// NOCS value minus 0.5, so every coordinate lies in `[-0.5, 0.5]`.
    pub src: Vec<Vector3<f64>>,
    /// Backprojected depth, scene units.
    pub dst: Vec<Vector3<f64>>,
    /// Row-major source pixel index of each pair.
    pub pixels: Vec<usize>,
}

impl CorrespondenceSet {
    pub fn new(src: Vec<Vector3<f64>>, dst: Vec<Vector3<f64>>) -> Result<Self> {
        let pixels = (0..src.len()).collect();
        let set = CorrespondenceSet { src, dst, pixels };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.src.len() != self.dst.len() || self.src.len() != self.pixels.len() {
            return Err(Error::shape("correspondence lists differ in length"));
        }
        if self.src.len() < 3 {
            return Err(Error::InsufficientCorrespondences(self.src.len()));
        }
        let finite = |v: &Vector3<f64>| v.iter().all(|c| c.is_finite());
        if !self.src.iter().all(finite) || !self.dst.iter().all(finite) {
            return Err(Error::invalid("non-finite correspondence coordinates"));
        }
        Ok(())
    }
}

/// Pair every pixel that is masked, has valid depth and a foreground NOCS value.
///
/// When more than `max_n` pixels qualify, a uniform subset of `max_n` is kept
/// (pixel order preserved).
pub fn build_correspondences(
    nocs: &NocsMap,
    depth: &DepthMap,
    mask: &Mask,
    intr: &Intrinsics,
    max_n: usize,
    rng: &mut impl Rng,
) -> Result<CorrespondenceSet> {
    intr.ensure_grid(depth, "depth")?;
    intr.ensure_grid(mask, "mask")?;
    intr.ensure_grid(nocs.mask(), "nocs")?;
    let mut eligible = Vec::new();
    for i in 0..mask.len() {
        if mask.as_slice()[i] && depth.as_slice()[i] > 0.0 && nocs.mask().as_slice()[i] {
            eligible.push(i);
        }
    }
    if eligible.len() < 3 {
        return Err(Error::InsufficientCorrespondences(eligible.len()));
    }
    if eligible.len() > max_n {
        let mut keep = rand::seq::index::sample(rng, eligible.len(), max_n).into_vec();
        keep.sort_unstable();
        eligible = keep.into_iter().map(|k| eligible[k]).collect();
    }
    let w = intr.width;
    let mut src = Vec::with_capacity(eligible.len());
    let mut dst = Vec::with_capacity(eligible.len());
    for &i in &eligible {
        let p = nocs.values().as_slice()[i];
        src.push(Vector3::new(p[0] as f64 - 0.5, p[1] as f64 - 0.5, p[2] as f64 - 0.5));
        let (u, v) = (i % w, i / w);
        dst.push(intr.backproject_pixel(u as f64, v as f64, depth.as_slice()[i] as f64));
    }
    Ok(CorrespondenceSet {
        src,
        dst,
        pixels: eligible,
    })
}
