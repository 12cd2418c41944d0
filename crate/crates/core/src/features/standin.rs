//! Deterministic filter-bank features used when no external extractor is available.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::map::{FeatureMap, Provenance};
use crate::geometry::RgbImage;

pub const STANDIN_DIM: usize = 32;

/// Channels whose kernels are mirror-symmetric (color blurs and isotropic DoG).
pub const STANDIN_SYMMETRIC_CHANNELS: [usize; 12] = [0, 1, 2, 3, 4, 5, 16, 17, 18, 19, 20, 21];

const SCALES: [f64; 2] = [1.0, 2.0];
const ORIENTED_PER_SCALE: usize = 10;
const BANK_SEED: u64 = 0x5EED_F11E;

struct Kernel {
    radius: usize,
    weights: Vec<f32>,
}

impl Kernel {
    fn from_fn(radius: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let side = 2 * radius + 1;
        let mut weights = Vec::with_capacity(side * side);
        for dy in 0..side {
            for dx in 0..side {
                weights.push(f(dx as f64 - radius as f64, dy as f64 - radius as f64) as f32);
            }
        }
        Kernel { radius, weights }
    }
}

fn gaussian(su: f64, sv: f64, theta: f64, x: f64, y: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let u = c * x + s * y;
    let v = -s * x + c * y;
    (-0.5 * (u * u / (su * su) + v * v / (sv * sv))).exp()
}

fn normalized(radius: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let side = 2 * radius + 1;
    let mut w = Vec::with_capacity(side * side);
    for dy in 0..side {
        for dx in 0..side {
            w.push(f(dx as f64 - radius as f64, dy as f64 - radius as f64));
        }
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

struct Bank {
    /// Per scale: isotropic blur, isotropic DoG, oriented DoGs.
    scales: Vec<(Kernel, Kernel, Vec<Kernel>)>,
}

fn bank() -> &'static Bank {
    static BANK: OnceLock<Bank> = OnceLock::new();
    BANK.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(BANK_SEED);
        let scales = SCALES
            .iter()
            .map(|&sigma| {
                let r = (3.0 * 2.0 * sigma).ceil() as usize;
                let narrow = normalized(r, |x, y| gaussian(sigma, sigma, 0.0, x, y));
                let wide = normalized(r, |x, y| gaussian(2.0 * sigma, 2.0 * sigma, 0.0, x, y));
                let side = 2 * r + 1;
                let idx = |x: f64, y: f64| (y as isize + r as isize) as usize * side + (x as isize + r as isize) as usize;
                let blur = Kernel::from_fn(r, |x, y| narrow[idx(x, y)]);
                let dog = Kernel::from_fn(r, |x, y| narrow[idx(x, y)] - wide[idx(x, y)]);
                let oriented = (0..ORIENTED_PER_SCALE)
                    .map(|_| {
                        let theta = rng.random_range(0.0..PI);
                        let elong = rng.random_range(1.5..3.0);
                        let aniso = normalized(r, |x, y| gaussian(elong * sigma, sigma / elong.sqrt(), theta, x, y));
                        Kernel::from_fn(r, |x, y| aniso[idx(x, y)] - narrow[idx(x, y)])
                    })
                    .collect();
                (blur, dog, oriented)
            })
            .collect();
        Bank { scales }
    })
}

fn convolve(plane: &[f32], width: usize, height: usize, k: &Kernel) -> Vec<f32> {
    let r = k.radius as isize;
    let side = 2 * k.radius + 1;
    let mut out = vec![0.0f32; width * height];
    for y in 0..height as isize {
        for x in 0..width as isize {
            let mut acc = 0.0f32;
            for dy in -r..=r {
                let sy = (y + dy).clamp(0, height as isize - 1) as usize;
                let row = &plane[sy * width..(sy + 1) * width];
                let krow = &k.weights[(dy + r) as usize * side..(dy + r + 1) as usize * side];
                for (kw, dx) in krow.iter().zip(-r..=r) {
                    let sx = (x + dx).clamp(0, width as isize - 1) as usize;
                    acc += kw * row[sx];
                }
            }
            out[y as usize * width + x as usize] = acc;
        }
    }
    out
}

/// 32-channel features: per scale, blurred luminance / red-green / blue-yellow,
/// isotropic DoG of the same three planes, and ten oriented DoG on luminance.
pub fn standin_features(rgb: &RgbImage) -> FeatureMap {
    let (w, h) = (rgb.width(), rgb.height());
    let mut planes = [vec![0.0f32; w * h], vec![0.0f32; w * h], vec![0.0f32; w * h]];
    for (i, p) in rgb.as_slice().iter().enumerate() {
        planes[0][i] = (p[0] + p[1] + p[2]) / 3.0;
        planes[1][i] = p[0] - p[1];
        planes[2][i] = 0.5 * (p[0] + p[1]) - p[2];
    }
    let mut channels: Vec<Vec<f32>> = Vec::with_capacity(STANDIN_DIM);
    for (blur, dog, oriented) in &bank().scales {
        for p in &planes {
            channels.push(convolve(p, w, h, blur));
        }
        for p in &planes {
            channels.push(convolve(p, w, h, dog));
        }
        for k in oriented {
            channels.push(convolve(&planes[0], w, h, k));
        }
    }
    debug_assert_eq!(channels.len(), STANDIN_DIM);
    let mut out = FeatureMap::zeros(w, h, STANDIN_DIM, Provenance::StandIn);
    for y in 0..h {
        for x in 0..w {
            let px = out.pixel_mut(x, y);
            for (c, ch) in channels.iter().enumerate() {
                px[c] = ch[y * w + x];
            }
        }
    }
    out
}
