use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::map::{FeatureMap, Provenance};
use crate::error::{Error, Result};
use crate::geometry::Mask;

/// Principal subspace of a set of D-vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// `M` orthonormal rows of length `D`, by descending variance.
    pub components: Vec<Vec<f64>>,
    /// Variance captured by each component (non-increasing).
    pub variances: Vec<f64>,
}

impl PcaBasis {
    /// Pass-through basis of dimension `d` (zero mean, unit components).
    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            components: (0..d)
                .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            variances: vec![1.0; d],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.len()
    }

    /// `components · (x − mean)`.
    pub fn project(&self, x: &[f32]) -> Vec<f64> {
        self.components
            .iter()
            .map(|row| {
                row.iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(c, (&v, m))| c * (v as f64 - m))
                    .sum()
            })
            .collect()
    }

    /// `mean + componentsᵀ · y`.
    pub fn reconstruct(&self, y: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (row, &coef) in self.components.iter().zip(y) {
            for (o, c) in out.iter_mut().zip(row) {
                *o += c * coef;
            }
        }
        out
    }
}

/// Fit the top-`m` principal components of `rows`.
///
/// Covariance uses the `n − 1` normalization (plain `n` for a single row).
/// Components are sorted by descending eigenvalue and signed so each row's
/// largest-magnitude entry is positive.
pub fn pca_fit<R: AsRef<[f64]>>(rows: &[R], m: usize) -> Result<PcaBasis> {
    let n = rows.len();
    if m == 0 {
        return Err(Error::invalid("PCA output dimension must be at least 1"));
    }
    if m > n {
        return Err(Error::invalid(format!("PCA output dimension {m} exceeds sample count {n}")));
    }
    let d = rows[0].as_ref().len();
    if m > d {
        return Err(Error::invalid(format!("PCA output dimension {m} exceeds input dimension {d}")));
    }
    if rows.iter().any(|r| r.as_ref().len() != d) {
        return Err(Error::shape("PCA rows differ in length"));
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        for (acc, v) in mean.iter_mut().zip(r.as_ref()) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for r in rows {
        for (c, (v, mu)) in centered.iter_mut().zip(r.as_ref().iter().zip(&mean)) {
            *c = v - mu;
        }
        for i in 0..d {
            let ci = centered[i];
            for j in i..d {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut components = Vec::with_capacity(m);
    let mut variances = Vec::with_capacity(m);
    for &k in order.iter().take(m) {
        let mut row: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let mut pivot = 0;
        for (i, v) in row.iter().enumerate() {
            if v.abs() > row[pivot].abs() + 1e-12 {
                pivot = i;
            }
        }
        if row[pivot] < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(row);
        variances.push(eig.eigenvalues[k].max(0.0));
    }
    Ok(PcaBasis {
        mean,
        components,
        variances,
    })
}

/// Raw projection of every pixel, no rescaling.
pub fn pca_project(fm: &FeatureMap, basis: &PcaBasis) -> Result<Vec<Vec<f64>>> {
    if fm.dim() != basis.input_dim() {
        return Err(Error::shape(format!(
            "feature dimension {} does not match PCA input dimension {}",
            fm.dim(),
            basis.input_dim()
        )));
    }
    let mut out = Vec::with_capacity(fm.width() * fm.height());
    for y in 0..fm.height() {
        for x in 0..fm.width() {
            out.push(basis.project(fm.pixel(x, y)));
        }
    }
    Ok(out)
}

/// Project to `M` channels and rescale each channel to `[0,1]` over the foreground.
///
/// Background pixels (mask false) are zero. A channel that is constant over the
/// foreground maps to 0.5. With `mask = None` every pixel is foreground.
pub fn pca_apply(fm: &FeatureMap, basis: &PcaBasis, mask: Option<&Mask>) -> Result<FeatureMap> {
    if let Some(mask) = mask {
        if mask.width() != fm.width() || mask.height() != fm.height() {
            return Err(Error::shape("feature map and mask differ in size"));
        }
    }
    let projected = pca_project(fm, basis)?;
    let m = basis.output_dim();
    let fg = |i: usize| mask.is_none_or(|mk| mk.as_slice()[i]);
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for (i, p) in projected.iter().enumerate() {
        if fg(i) {
            for k in 0..m {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
    }
    let mut data = vec![0.0f32; projected.len() * m];
    for (i, p) in projected.iter().enumerate() {
        if !fg(i) {
            continue;
        }
        for k in 0..m {
            let span = hi[k] - lo[k];
            data[i * m + k] = if span > 1e-12 {
                ((p[k] - lo[k]) / span) as f32
            } else {
                0.5
            };
        }
    }
    FeatureMap::from_vec(fm.width(), fm.height(), m, data, Provenance::Projected)
}
