use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use super::grid::{Grid, Mask};
use crate::error::{Error, Result};

/// Pinhole intrinsics; pixel `(u, v)` has its center at coordinate `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    /// Square frame with focal length `200 * size / 160` and principal point at the center.
    pub fn square_default(size: usize) -> Self {
        let f = 200.0 * size as f64 / 160.0;
        Self {
            fx: f,
            fy: f,
            cx: size as f64 / 2.0,
            cy: size as f64 / 2.0,
            width: size,
            height: size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid intrinsics {self:?}")))
        }
    }

    pub fn project(&self, p: &Vector3<f64>) -> (f64, f64) {
        (
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        )
    }

    /// Ray direction through pixel `(u, v)` with unit z component.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    pub fn backproject_pixel(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        self.ray(u, v) * z
    }

    pub(crate) fn ensure_grid<T>(&self, grid: &Grid<T>, what: &str) -> Result<()> {
        if grid.width() == self.width && grid.height() == self.height {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{what} is {}x{}, intrinsics expect {}x{}",
                grid.width(),
                grid.height(),
                self.width,
                self.height
            )))
        }
    }
}

/// Rotation + translation, mapping points from a source frame into a target frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn is_valid(&self) -> bool {
        is_rotation(&self.rotation, 1e-6) && self.translation.iter().all(|v| v.is_finite())
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidPose) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        row_major(&self.to_matrix())
    }

    pub fn from_row_major(m: &[f64; 16]) -> Result<Self> {
        let mat = Matrix4::from_row_slice(m);
        let pose = Self::new(
            mat.fixed_view::<3, 3>(0, 0).into_owned(),
            mat.fixed_view::<3, 1>(0, 3).into_owned(),
        );
        if pose.is_valid() {
            Ok(pose)
        } else {
            Err(Error::invalid("matrix is not a rigid transform"))
        }
    }
}

/// `p ↦ scale · R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub pose: RigidPose,
}

impl SimilarityTransform {
    pub fn new(scale: f64, pose: RigidPose) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!("scale must be positive, got {scale}")));
        }
        Ok(Self { scale, pose })
    }

    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            pose: RigidPose::identity(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.pose.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.pose.translation
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.pose.rotation * p * self.scale + self.pose.translation
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(self.pose.rotation * self.scale));
        m.fixed_view_mut::<3, 1>(0, 3)
            .copy_from(&self.pose.translation);
        m
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        row_major(&self.to_matrix())
    }

    /// Left-compose a rigid motion: `p ↦ motion(self(p))`.
    pub fn premultiply(&self, motion: &RigidPose) -> Self {
        Self {
            scale: self.scale,
            pose: motion.compose(&self.pose),
        }
    }
}

fn row_major(m: &Matrix4<f64>) -> [f64; 16] {
    let mut out = [0.0; 16];
    for r in 0..4 {
        for c in 0..4 {
            out[r * 4 + c] = m[(r, c)];
        }
    }
    out
}

pub fn is_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    err <= tol && (r.determinant() - 1.0).abs() <= tol
}

/// Rotation by `angle` radians about a unit `axis`.
pub fn axis_angle(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let axis = nalgebra::Unit::new_normalize(*axis);
    nalgebra::Rotation3::from_axis_angle(&axis, angle).into_inner()
}

/// Depth image in scene units; `0` marks invalid pixels.
pub type DepthMap = Grid<f32>;

/// Camera-frame unit normals; invalid pixels are the zero vector.
pub type NormalMap = Grid<[f32; 3]>;

/// Per-pixel canonical coordinates in `[0, 1]^3` plus a foreground mask.
#[derive(Debug, Clone, PartialEq)]
pub struct NocsMap {
    values: Grid<[f32; 3]>,
    mask: Mask,
}

pub const NOCS_BACKGROUND: [f32; 3] = [1.0, 1.0, 1.0];

impl NocsMap {
    /// Values are checked against `[0,1]`; background pixels are rewritten to white.
    pub fn new(mut values: Grid<[f32; 3]>, mask: Mask) -> Result<Self> {
        values.ensure_dims(&mask, "nocs values vs mask")?;
        for (v, &m) in values.as_mut_slice().iter_mut().zip(mask.as_slice()) {
            if !v.iter().all(|c| (0.0..=1.0).contains(c)) {
                return Err(Error::invalid(format!("NOCS value {v:?} outside [0,1]")));
            }
            if !m {
                *v = NOCS_BACKGROUND;
            }
        }
        Ok(Self { values, mask })
    }

    pub fn background(width: usize, height: usize) -> Self {
        Self {
            values: Grid::new(width, height, NOCS_BACKGROUND),
            mask: Grid::new(width, height, false),
        }
    }

    pub fn values(&self) -> &Grid<[f32; 3]> {
        &self.values
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn foreground_count(&self) -> usize {
        super::grid::mask_count(&self.mask)
    }

    /// Replace the foreground mask; pixels leaving the foreground turn white.
    pub fn with_mask(&self, mask: &Mask) -> Result<Self> {
        Self::new(self.values.clone(), mask.clone())
    }
}

/// Square box in pixel-edge coordinates: the image spans `[0, width] x [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub side: f64,
}

impl BoundingBox {
    pub fn new(cx: f64, cy: f64, side: f64) -> Result<Self> {
        let b = Self { cx, cy, side };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.side > 0.0 && self.side.is_finite() && self.cx.is_finite() && self.cy.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!("bounding box side must be > 0, got {}", self.side)))
        }
    }

    pub fn full_frame(width: usize, height: usize) -> Self {
        Self {
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            side: width.max(height) as f64,
        }
    }

    /// Square box around the mask's pixel extent, enlarged by `margin`, center clamped into the image.
    pub fn from_mask(mask: &Mask, margin: f64) -> Result<Self> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0usize, 0usize);
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                if *mask.get(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x + 1);
                    y1 = y1.max(y + 1);
                }
            }
        }
        if x0 == usize::MAX {
            return Err(Error::invalid("empty mask"));
        }
        let cx = ((x0 + x1) as f64 / 2.0).clamp(0.0, mask.width() as f64);
        let cy = ((y0 + y1) as f64 / 2.0).clamp(0.0, mask.height() as f64);
        let side = ((x1 - x0).max(y1 - y0) as f64 * margin).max(1.0);
        Self::new(cx, cy, side)
    }

    /// Left/top edge of the box.
    pub fn origin(&self) -> (f64, f64) {
        (self.cx - self.side / 2.0, self.cy - self.side / 2.0)
    }
}

/// 3D points with optional source pixel indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub pixels: Option<Vec<usize>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self {
            points,
            pixels: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// Axis-aligned bounding-box diagonal.
    pub fn extent(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (hi - lo).norm()
    }
}
