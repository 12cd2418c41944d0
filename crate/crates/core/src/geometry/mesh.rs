use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Indexed triangle mesh with flat per-triangle albedo.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
    pub albedo: Vec<[f32; 3]>,
}

impl Mesh {
    pub fn new(
        vertices: Vec<Vector3<f64>>,
        triangles: Vec<[usize; 3]>,
        albedo: Vec<[f32; 3]>,
    ) -> Result<Self> {
        let mesh = Self {
            vertices,
            triangles,
            albedo,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Mesh with one albedo shared by every triangle.
    pub fn uniform(
        vertices: Vec<Vector3<f64>>,
        triangles: Vec<[usize; 3]>,
        albedo: [f32; 3],
    ) -> Result<Self> {
        let n = triangles.len();
        Self::new(vertices, triangles, vec![albedo; n])
    }

    pub fn validate(&self) -> Result<()> {
        if self.triangles.is_empty() {
            return Err(Error::invalid("mesh has no triangles"));
        }
        if self.albedo.len() != self.triangles.len() {
            return Err(Error::invalid("albedo count differs from triangle count"));
        }
        let n = self.vertices.len();
        if self.triangles.iter().flatten().any(|&i| i >= n) {
            return Err(Error::invalid("triangle index out of range"));
        }
        if self
            .vertices
            .iter()
            .any(|v| !v.iter().all(|c| c.is_finite()))
        {
            return Err(Error::invalid("non-finite vertex"));
        }
        Ok(())
    }

    /// Tight bounds over the vertices referenced by triangles.
    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &i in self.triangles.iter().flatten() {
            lo = lo.inf(&self.vertices[i]);
            hi = hi.sup(&self.vertices[i]);
        }
        (lo, hi)
    }

    pub fn transformed(&self, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> Self {
        Self {
            vertices: self.vertices.iter().map(f).collect(),
            triangles: self.triangles.clone(),
            albedo: self.albedo.clone(),
        }
    }

    /// Append another mesh's geometry.
    pub fn merge(&mut self, other: &Mesh) {
        let base = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        self.albedo.extend_from_slice(&other.albedo);
    }
}

/// Center the bounding box at the origin and scale its diagonal to 1.
///
/// Returns the canonical mesh and the original diagonal length. The NOCS
/// coordinate of a canonical point `p` is `p + 0.5`.
pub fn canonicalize_mesh(mesh: &Mesh) -> Result<(Mesh, f64)> {
    mesh.validate()?;
    let (lo, hi) = mesh.bounds();
    let diag = (hi - lo).norm();
    if !(diag > 1e-12) {
        return Err(Error::DegenerateGeometry("zero bounding-box diagonal".into()));
    }
    let center = (lo + hi) * 0.5;
    let canonical = mesh.transformed(|v| (v - center) / diag);
    Ok((canonical, diag))
}
