use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{
    DepthMap, Grid, Intrinsics, Mask, Mesh, NocsMap, NormalMap, RgbImage, RigidPose,
    NOCS_BACKGROUND,
};

/// Ambient + diffuse shading parameters; `direction` is the direction light travels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lighting {
    pub ambient: f32,
    pub diffuse: f32,
    pub direction: Vector3<f64>,
}

impl Lighting {
    /// Camera-mounted light along the optical axis.
    pub fn baseline() -> Self {
        Self {
            ambient: 0.5,
            diffuse: 0.5,
            direction: Vector3::z(),
        }
    }

    pub fn shade(&self, normal: &Vector3<f64>) -> f32 {
        self.ambient + self.diffuse * (-normal.dot(&self.direction)).max(0.0) as f32
    }
}

/// Synchronized images of one rendered view.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub rgb: RgbImage,
    pub depth: DepthMap,
    pub mask: Mask,
    pub normals: NormalMap,
    pub nocs: NocsMap,
    /// World→camera pose; the world frame is the object's canonical frame scaled by `scale`.
    pub camera: RigidPose,
    /// Bounding-box diagonal of the object in scene units.
    pub scale: f64,
    pub category: u32,
}

/// Möller–Trumbore intersection for a ray from the origin; returns the ray parameter.
#[inline]
fn intersect(dir: &Vector3<f64>, v0: &Vector3<f64>, e1: &Vector3<f64>, e2: &Vector3<f64>) -> Option<f64> {
    let p = dir.cross(e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-15 {
        return None;
    }
    let inv = 1.0 / det;
    let s = -v0;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 1e-9).then_some(t)
}

/// Ray-cast a canonical mesh scaled by `scale` from the camera `cam`.
///
/// Every pixel casts one ray through its center and keeps the nearest hit.
/// Triangles are binned by their projected pixel bounds so each ray only tests
/// candidates that can reach it.
pub fn render_view(
    mesh: &Mesh,
    scale: f64,
    cam: &RigidPose,
    intr: &Intrinsics,
    light: &Lighting,
    category: u32,
) -> Result<RenderOutput> {
    mesh.validate()?;
    intr.validate()?;
    if !(scale > 0.0) {
        return Err(Error::invalid("object scale must be positive"));
    }
    let (w, h) = (intr.width, intr.height);
    let verts: Vec<Vector3<f64>> = mesh.vertices.iter().map(|v| cam.apply(&(v * scale))).collect();

    let mut best_t = vec![f64::INFINITY; w * h];
    let mut best_tri = vec![usize::MAX; w * h];
    for (ti, tri) in mesh.triangles.iter().enumerate() {
        let (a, b, c) = (verts[tri[0]], verts[tri[1]], verts[tri[2]]);
        let e1 = b - a;
        let e2 = c - a;
        let (u0, u1, v0, v1) = if a.z > 1e-9 && b.z > 1e-9 && c.z > 1e-9 {
            let pa = intr.project(&a);
            let pb = intr.project(&b);
            let pc = intr.project(&c);
            let umin = pa.0.min(pb.0).min(pc.0).floor() - 1.0;
            let umax = pa.0.max(pb.0).max(pc.0).ceil() + 1.0;
            let vmin = pa.1.min(pb.1).min(pc.1).floor() - 1.0;
            let vmax = pa.1.max(pb.1).max(pc.1).ceil() + 1.0;
            if umax < 0.0 || vmax < 0.0 || umin > w as f64 || vmin > h as f64 {
                continue;
            }
            (
                umin.max(0.0) as usize,
                (umax.min(w as f64 - 1.0)) as usize,
                vmin.max(0.0) as usize,
                (vmax.min(h as f64 - 1.0)) as usize,
            )
        } else {
            (0, w - 1, 0, h - 1)
        };
        for v in v0..=v1 {
            for u in u0..=u1 {
                let dir = intr.ray(u as f64, v as f64);
                if let Some(t) = intersect(&dir, &a, &e1, &e2) {
                    let idx = v * w + u;
                    if t < best_t[idx] {
                        best_t[idx] = t;
                        best_tri[idx] = ti;
                    }
                }
            }
        }
    }

    let mut rgb = RgbImage::new(w, h, [1.0; 3]);
    let mut depth = DepthMap::new(w, h, 0.0);
    let mut mask = Mask::new(w, h, false);
    let mut normals = NormalMap::new(w, h, [0.0; 3]);
    let mut nocs_vals = Grid::new(w, h, NOCS_BACKGROUND);
    let rt = cam.rotation.transpose();
    let mut hits = 0usize;
    for v in 0..h {
        for u in 0..w {
            let idx = v * w + u;
            let ti = best_tri[idx];
            if ti == usize::MAX {
                continue;
            }
            let t = best_t[idx];
            let dir = intr.ray(u as f64, v as f64);
            let hit = dir * t;
            let tri = mesh.triangles[ti];
            let mut n = (verts[tri[1]] - verts[tri[0]])
                .cross(&(verts[tri[2]] - verts[tri[0]]))
                .normalize();
            if n.dot(&dir) > 0.0 {
                n = -n;
            }
            let canonical = rt * (hit - cam.translation) / scale;
            let shade = light.shade(&n);
            let albedo = mesh.albedo[ti];
            hits += 1;
            depth.set(u, v, hit.z as f32);
            mask.set(u, v, true);
            normals.set(u, v, [n.x as f32, n.y as f32, n.z as f32]);
            rgb.set(u, v, albedo.map(|a| (a * shade).clamp(0.0, 1.0)));
            nocs_vals.set(
                u,
                v,
                [
                    (canonical.x + 0.5).clamp(0.0, 1.0) as f32,
                    (canonical.y + 0.5).clamp(0.0, 1.0) as f32,
                    (canonical.z + 0.5).clamp(0.0, 1.0) as f32,
                ],
            );
        }
    }
    if hits == 0 {
        return Err(Error::EmptyRender);
    }
    // A hit so close to the camera that it rounds to zero depth would break mask == depth > 0.
    for (m, d) in mask.as_mut_slice().iter_mut().zip(depth.as_slice()) {
        *m = *m && *d > 0.0;
    }
    let nocs = NocsMap::new(nocs_vals, mask.clone())?;
    Ok(RenderOutput {
        rgb,
        depth,
        mask,
        normals,
        nocs,
        camera: *cam,
        scale,
        category,
    })
}
