use super::grid::{Grid, Mask};
use super::types::{BoundingBox, NocsMap};
use crate::error::{Error, Result};

/// How source pixels are interpolated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resampling {
    Nearest,
    Bilinear,
    /// Bilinear, then rescaled to unit length (zero stays zero).
    BilinearUnit,
}

/// Pixel values that can be blended for bilinear sampling.
pub trait Resample: Clone {
    fn blend(taps: [&Self; 4], weights: [f32; 4]) -> Self;

    fn renormalize(self) -> Self {
        self
    }
}

impl Resample for f32 {
    fn blend(taps: [&Self; 4], w: [f32; 4]) -> Self {
        taps[0] * w[0] + taps[1] * w[1] + taps[2] * w[2] + taps[3] * w[3]
    }
}

impl Resample for [f32; 3] {
    fn blend(taps: [&Self; 4], w: [f32; 4]) -> Self {
        let mut out = [0.0f32; 3];
        for (k, o) in out.iter_mut().enumerate() {
            *o = taps[0][k] * w[0] + taps[1][k] * w[1] + taps[2][k] * w[2] + taps[3][k] * w[3];
        }
        out
    }

    fn renormalize(self) -> Self {
        let n = (self[0] * self[0] + self[1] * self[1] + self[2] * self[2]).sqrt();
        if n > 1e-6 {
            [self[0] / n, self[1] / n, self[2] / n]
        } else {
            [0.0; 3]
        }
    }
}

impl Resample for bool {
    fn blend(taps: [&Self; 4], w: [f32; 4]) -> Self {
        let mut best = 0;
        for k in 1..4 {
            if w[k] > w[best] {
                best = k;
            }
        }
        *taps[best]
    }
}

/// Crop the square `bbox`, center it, and resize to `out_size x out_size`.
///
/// Output pixel `i` samples the source at `bbox.origin + (i + 0.5) * side / out_size`
/// (pixel-edge coordinates). Samples that fall outside the source take `fill`.
pub fn crop_warp_resize<T: Resample>(
    image: &Grid<T>,
    bbox: &BoundingBox,
    out_size: usize,
    fill: T,
    mode: Resampling,
) -> Result<Grid<T>> {
    if out_size == 0 {
        return Err(Error::invalid("output size must be positive"));
    }
    bbox.validate()?;
    let (w, h) = (image.width() as f64, image.height() as f64);
    let (x0, y0) = bbox.origin();
    let step = bbox.side / out_size as f64;
    Ok(Grid::from_fn(out_size, out_size, |i, j| {
        let x = x0 + (i as f64 + 0.5) * step;
        let y = y0 + (j as f64 + 0.5) * step;
        if !(x >= 0.0 && x < w && y >= 0.0 && y < h) {
            return fill.clone();
        }
        match mode {
            Resampling::Nearest => image.get(x as usize, y as usize).clone(),
            Resampling::Bilinear => bilinear(image, x, y),
            Resampling::BilinearUnit => bilinear(image, x, y).renormalize(),
        }
    }))
}

fn bilinear<T: Resample>(image: &Grid<T>, x: f64, y: f64) -> T {
    let max_x = image.width() as isize - 1;
    let max_y = image.height() as isize - 1;
    let fx = x - 0.5;
    let fy = y - 0.5;
    let xf = fx.floor();
    let yf = fy.floor();
    let ax = (fx - xf) as f32;
    let ay = (fy - yf) as f32;
    let xa = (xf as isize).clamp(0, max_x) as usize;
    let xb = (xf as isize + 1).clamp(0, max_x) as usize;
    let ya = (yf as isize).clamp(0, max_y) as usize;
    let yb = (yf as isize + 1).clamp(0, max_y) as usize;
    T::blend(
        [
            image.get(xa, ya),
            image.get(xb, ya),
            image.get(xa, yb),
            image.get(xb, yb),
        ],
        [
            (1.0 - ax) * (1.0 - ay),
            ax * (1.0 - ay),
            (1.0 - ax) * ay,
            ax * ay,
        ],
    )
}

/// Inverse of [`crop_warp_resize`] for NOCS maps: place a square map back into a
/// `width x height` frame with nearest sampling. Pixels outside the box are background.
pub fn unwarp_nocs(
    square: &NocsMap,
    bbox: &BoundingBox,
    width: usize,
    height: usize,
) -> Result<NocsMap> {
    if square.width() != square.height() {
        return Err(Error::shape("NOCS map to unwarp must be square"));
    }
    bbox.validate()?;
    let n = square.width();
    let scale = n as f64 / bbox.side;
    let (x0, y0) = bbox.origin();
    let mut values = Grid::new(width, height, super::types::NOCS_BACKGROUND);
    let mut mask: Mask = Grid::new(width, height, false);
    for v in 0..height {
        let sy = (v as f64 + 0.5 - y0) * scale;
        if !(sy >= 0.0 && sy < n as f64) {
            continue;
        }
        for u in 0..width {
            let sx = (u as f64 + 0.5 - x0) * scale;
            if !(sx >= 0.0 && sx < n as f64) {
                continue;
            }
            let (i, j) = (sx as usize, sy as usize);
            if *square.mask().get(i, j) {
                values.set(u, v, *square.values().get(i, j));
                mask.set(u, v, true);
            }
        }
    }
    NocsMap::new(values, mask)
}
