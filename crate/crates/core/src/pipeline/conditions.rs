use crate::denoiser::{ConditionSet, Modality};
use crate::error::{Error, Result};
use crate::features::{pca_apply, standin_features, FeatureMap, PcaBasis};
use crate::geometry::{
    crop_warp_resize, mask_count, normals_from_depth, BoundingBox, DepthMap, Grid, Intrinsics, Mask,
    NormalMap, RgbImage, Resampling,
};
use crate::synthgen::RenderOutput;

/// Relative enlargement of the mask's extent when no box is given.
pub const DEFAULT_BBOX_MARGIN: f64 = 1.15;

/// Default number of noise hypotheses per request.
pub const DEFAULT_NOISES: usize = 6;

/// One object to estimate: images in the original frame plus conditioning choices.
#[derive(Debug, Clone)]
pub struct InferenceRequest {
    pub rgb: Option<RgbImage>,
    pub depth: Option<DepthMap>,
    pub mask: Mask,
    /// Square crop; derived from the mask when `None`.
    pub bbox: Option<BoundingBox>,
    pub intr: Intrinsics,
    pub category: Option<usize>,
    pub modalities: Vec<Modality>,
    /// Raw dense features over the full frame, any resolution; the stand-in extractor runs when `None`.
    pub features: Option<FeatureMap>,
    pub n_noises: usize,
    pub seed: u64,
}

impl InferenceRequest {
    /// Request with every modality enabled, default noise count and seed 0.
    pub fn new(mask: Mask, intr: Intrinsics) -> Self {
        Self {
            rgb: None,
            depth: None,
            mask,
            bbox: None,
            intr,
            category: None,
            modalities: Modality::ALL.to_vec(),
            features: None,
            n_noises: DEFAULT_NOISES,
            seed: 0,
        }
    }

    /// Request built from a rendered view, with its rgb, depth, mask and category.
    pub fn from_render(view: &RenderOutput, intr: Intrinsics) -> Self {
        let mut req = Self::new(view.mask.clone(), intr);
        req.rgb = Some(view.rgb.clone());
        req.depth = Some(view.depth.clone());
        req.category = (view.category > 0).then_some(view.category as usize);
        req
    }

    pub fn enabled(&self, m: Modality) -> bool {
        self.modalities.contains(&m)
    }

    pub fn validate(&self) -> Result<()> {
        self.intr.validate()?;
        self.intr.ensure_grid(&self.mask, "mask")?;
        if let Some(rgb) = &self.rgb {
            self.intr.ensure_grid(rgb, "rgb")?;
        }
        if let Some(depth) = &self.depth {
            self.intr.ensure_grid(depth, "depth")?;
        }
        if self.rgb.is_none() && self.depth.is_none() {
            return Err(Error::invalid("request needs a depth or an rgb image"));
        }
        if self.n_noises == 0 {
            return Err(Error::invalid("n_noises must be at least 1"));
        }
        if mask_count(&self.mask) == 0 {
            return Err(Error::invalid("empty mask"));
        }
        if let Some(b) = &self.bbox {
            b.validate()?;
        }
        Ok(())
    }

    pub fn bbox_used(&self) -> Result<BoundingBox> {
        match self.bbox {
            Some(b) => Ok(b),
            None => BoundingBox::from_mask(&self.mask, DEFAULT_BBOX_MARGIN),
        }
    }
}

/// Masked images cropped to the square network size, before feature projection.
#[derive(Debug, Clone)]
pub struct CroppedInputs {
    pub bbox: BoundingBox,
    pub mask: Mask,
    /// White background.
    pub rgb: Option<RgbImage>,
    /// Zero background; present whenever depth is.
    pub normals: Option<NormalMap>,
}

/// Mask, crop and resize the request's images to `size x size`.
pub fn crop_inputs(req: &InferenceRequest, size: usize) -> Result<CroppedInputs> {
    req.validate()?;
    let bbox = req.bbox_used()?;
    let mask = crop_warp_resize(&req.mask, &bbox, size, false, Resampling::Nearest)?;
    if mask_count(&mask) == 0 {
        return Err(Error::invalid("mask does not overlap the crop box"));
    }
    let rgb = match &req.rgb {
        Some(rgb) => {
            let masked = Grid::from_fn(rgb.width(), rgb.height(), |x, y| {
                if *req.mask.get(x, y) {
                    *rgb.get(x, y)
                } else {
                    [1.0; 3]
                }
            });
            Some(crop_warp_resize(&masked, &bbox, size, [1.0; 3], Resampling::Bilinear)?)
        }
        None => None,
    };
    let normals = match &req.depth {
        Some(depth) => {
            let mut n = normals_from_depth(depth, &req.intr)?;
            for (v, &m) in n.as_mut_slice().iter_mut().zip(req.mask.as_slice()) {
                if !m {
                    *v = [0.0; 3];
                }
            }
            Some(crop_warp_resize(&n, &bbox, size, [0.0; 3], Resampling::BilinearUnit)?)
        }
        None => None,
    };
    Ok(CroppedInputs {
        bbox,
        mask,
        rgb,
        normals,
    })
}

/// Nearest-sample a full-frame feature map of any resolution over the crop box.
pub fn crop_features(fm: &FeatureMap, bbox: &BoundingBox, frame: (usize, usize), size: usize) -> Result<FeatureMap> {
    bbox.validate()?;
    let (w, h) = (frame.0 as f64, frame.1 as f64);
    let (x0, y0) = bbox.origin();
    let step = bbox.side / size as f64;
    let mut out = FeatureMap::zeros(size, size, fm.dim(), fm.provenance());
    for j in 0..size {
        let y = y0 + (j as f64 + 0.5) * step;
        for i in 0..size {
            let x = x0 + (i as f64 + 0.5) * step;
            if !(x >= 0.0 && x < w && y >= 0.0 && y < h) {
                continue;
            }
            let fx = ((x / w * fm.width() as f64) as usize).min(fm.width() - 1);
            let fy = ((y / h * fm.height() as f64) as usize).min(fm.height() - 1);
            out.pixel_mut(i, j).copy_from_slice(fm.pixel(fx, fy));
        }
    }
    Ok(out)
}

/// Raw features for the crop: the cropped external map, or stand-in features of the cropped rgb.
pub fn raw_features(req: &InferenceRequest, crop: &CroppedInputs, size: usize) -> Result<FeatureMap> {
    match (&req.features, &crop.rgb) {
        (Some(fm), _) => crop_features(fm, &crop.bbox, (req.intr.width, req.intr.height), size),
        (None, Some(rgb)) => Ok(standin_features(rgb)),
        (None, None) => Err(Error::invalid("feature condition needs rgb or an external feature map")),
    }
}

/// Compress raw features to `channels` and rescale them over the foreground.
///
/// Raw maps of the basis' input dimension are projected; maps that already
/// have `channels` dimensions are only rescaled.
pub fn project_features(raw: &FeatureMap, channels: usize, pca: Option<&PcaBasis>, mask: &Mask) -> Result<FeatureMap> {
    match pca {
        Some(b) if raw.dim() == b.input_dim() && b.output_dim() == channels => pca_apply(raw, b, Some(mask)),
        _ if raw.dim() == channels => pca_apply(raw, &PcaBasis::identity(channels), Some(mask)),
        _ => Err(Error::shape(format!(
            "feature dimension {} matches neither the PCA input ({}) nor the network's {channels} channels",
            raw.dim(),
            pca.map_or(0, |b| b.input_dim())
        ))),
    }
}

/// Conditions at the network size, with the square mask and the crop box used.
#[derive(Debug, Clone)]
pub struct PreparedConditions {
    pub cond: ConditionSet,
    pub mask: Mask,
    pub bbox: BoundingBox,
}

/// Mask, crop, resize and encode the enabled modalities; disabled ones stay null.
pub fn prepare_conditions(
    req: &InferenceRequest,
    size: usize,
    feat_channels: usize,
    pca: Option<&PcaBasis>,
) -> Result<PreparedConditions> {
    let crop = crop_inputs(req, size)?;
    let mut cond = ConditionSet::default();
    if req.enabled(Modality::Normal) {
        cond.normal = Some(
            crop.normals
                .clone()
                .ok_or_else(|| Error::invalid("normal condition enabled without a depth image"))?,
        );
    }
    if req.enabled(Modality::Rgb) {
        cond.rgb = Some(
            crop.rgb
                .clone()
                .ok_or_else(|| Error::invalid("rgb condition enabled without an rgb image"))?,
        );
    }
    if req.enabled(Modality::Feat) && feat_channels > 0 {
        let raw = raw_features(req, &crop, size)?;
        cond.feat = Some(project_features(&raw, feat_channels, pca, &crop.mask)?);
    }
    if req.enabled(Modality::Category) {
        cond.category = req.category;
    }
    Ok(PreparedConditions {
        cond,
        mask: crop.mask,
        bbox: crop.bbox,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Provenance;

    fn toy_request(size: usize) -> InferenceRequest {
        let intr = Intrinsics::square_default(size);
        let mask = Grid::from_fn(size, size, |x, y| (2..size - 2).contains(&x) && (3..size - 3).contains(&y));
        let mut req = InferenceRequest::new(mask.clone(), intr);
        req.rgb = Some(Grid::from_fn(size, size, |x, y| [x as f32 / size as f32, y as f32 / size as f32, 0.25]));
        // A tilted plane in front of the camera.
        req.depth = Some(Grid::from_fn(size, size, |x, _| 2.0 + 0.01 * x as f32));
        req.category = Some(1);
        req
    }

    #[test]
    fn all_modalities_give_no_nulls() {
        let req = toy_request(16);
        let mut basis = PcaBasis::identity(crate::features::STANDIN_DIM);
        basis.components.truncate(3);
        basis.variances.truncate(3);
        let p = prepare_conditions(&req, 8, 3, Some(&basis)).unwrap();
        assert!(Modality::ALL.iter().all(|&m| p.cond.has(m)));
        p.cond.validate(8, 3).unwrap();
    }

    #[test]
    fn normal_only_leaves_other_conditions_null() {
        let mut req = toy_request(16);
        req.modalities = vec![Modality::Normal];
        let p = prepare_conditions(&req, 8, 3, None).unwrap();
        assert!(p.cond.normal.is_some());
        assert!(p.cond.rgb.is_none() && p.cond.feat.is_none());
        assert_eq!(p.cond.category_id(), 0);
    }

    #[test]
    fn full_frame_box_at_native_size_is_masking_only() {
        let mut req = toy_request(16);
        req.bbox = Some(BoundingBox::full_frame(16, 16));
        let p = prepare_conditions(&req, 16, 0, None).unwrap();
        assert_eq!(p.mask, req.mask);
        let rgb = p.cond.rgb.unwrap();
        let src = req.rgb.as_ref().unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let want = if *req.mask.get(x, y) { *src.get(x, y) } else { [1.0; 3] };
                assert_eq!(*rgb.get(x, y), want);
            }
        }
        let normals = p.cond.normal.unwrap();
        for y in 0..16 {
            for x in 0..16 {
                if !*req.mask.get(x, y) {
                    assert_eq!(*normals.get(x, y), [0.0; 3]);
                }
            }
        }
    }

    #[test]
    fn empty_mask_and_missing_depth_are_errors() {
        let mut req = toy_request(16);
        req.mask = Grid::new(16, 16, false);
        assert!(prepare_conditions(&req, 8, 0, None).is_err());
        let mut req = toy_request(16);
        req.depth = None;
        assert!(prepare_conditions(&req, 8, 0, None).is_err());
        req.modalities = vec![Modality::Rgb];
        assert!(prepare_conditions(&req, 8, 0, None).is_ok());
    }

    #[test]
    fn external_features_of_network_width_are_rescaled() {
        let mut req = toy_request(16);
        let data: Vec<f32> = (0..4 * 4 * 2).map(|i| i as f32).collect();
        req.features = Some(FeatureMap::from_vec(4, 4, 2, data, Provenance::ExternalFile).unwrap());
        let p = prepare_conditions(&req, 8, 2, None).unwrap();
        let feat = p.cond.feat.unwrap();
        assert_eq!(feat.dim(), 2);
        assert!(feat.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        req.features = Some(FeatureMap::zeros(4, 4, 5, Provenance::ExternalFile));
        assert!(prepare_conditions(&req, 8, 2, None).is_err());
    }
}
