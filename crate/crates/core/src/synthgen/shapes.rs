//! Procedural shape families and a minimal OBJ reader.
//!
//! Models are built in metric units with +y up. Cup handles point toward +x;
//! laptop hinges sit at -z with the screen facing +z.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Mesh;

/// Axis-aligned box centered at the origin. Face order: -x, +x, -y, +y, -z, +z.
pub fn cuboid(wx: f64, wy: f64, wz: f64, colors: [[f32; 3]; 6]) -> Mesh {
    let (hx, hy, hz) = (wx / 2.0, wy / 2.0, wz / 2.0);
    let v = |x: f64, y: f64, z: f64| Vector3::new(x * hx, y * hy, z * hz);
    let quads: [[Vector3<f64>; 4]; 6] = [
        [v(-1., -1., -1.), v(-1., -1., 1.), v(-1., 1., 1.), v(-1., 1., -1.)],
        [v(1., -1., -1.), v(1., 1., -1.), v(1., 1., 1.), v(1., -1., 1.)],
        [v(-1., -1., -1.), v(1., -1., -1.), v(1., -1., 1.), v(-1., -1., 1.)],
        [v(-1., 1., -1.), v(-1., 1., 1.), v(1., 1., 1.), v(1., 1., -1.)],
        [v(-1., -1., -1.), v(-1., 1., -1.), v(1., 1., -1.), v(1., -1., -1.)],
        [v(-1., -1., 1.), v(1., -1., 1.), v(1., 1., 1.), v(-1., 1., 1.)],
    ];
    let mut vertices = Vec::with_capacity(24);
    let mut triangles = Vec::with_capacity(12);
    let mut albedo = Vec::with_capacity(12);
    for (f, quad) in quads.iter().enumerate() {
        let b = vertices.len();
        vertices.extend_from_slice(quad);
        triangles.push([b, b + 1, b + 2]);
        triangles.push([b, b + 2, b + 3]);
        albedo.push(colors[f]);
        albedo.push(colors[f]);
    }
    Mesh {
        vertices,
        triangles,
        albedo,
    }
}

/// Surface of revolution about +y from a `(radius, height)` profile.
fn lathe(profile: &[(f64, f64)], segments: usize, color: [f32; 3]) -> Mesh {
    let mut vertices = Vec::new();
    for &(r, y) in profile {
        for s in 0..segments {
            let a = 2.0 * PI * s as f64 / segments as f64;
            vertices.push(Vector3::new(r * a.cos(), y, -r * a.sin()));
        }
    }
    let mut triangles = Vec::new();
    for ring in 0..profile.len() - 1 {
        let (r0, r1) = (profile[ring].0, profile[ring + 1].0);
        for s in 0..segments {
            let a = ring * segments + s;
            let b = ring * segments + (s + 1) % segments;
            let c = (ring + 1) * segments + s;
            let d = (ring + 1) * segments + (s + 1) % segments;
            if r0 > 0.0 {
                triangles.push([a, b, d]);
            }
            if r1 > 0.0 {
                triangles.push([a, d, c]);
            }
        }
    }
    let n = triangles.len();
    Mesh {
        vertices,
        triangles,
        albedo: vec![color; n],
    }
}

/// Half-torus handle in the x–y plane on the +x side of a cylinder of radius `body_r`.
fn handle(body_r: f64, center_y: f64, major: f64, tube: f64, color: [f32; 3]) -> Mesh {
    let (nu, nv) = (12, 8);
    let mut vertices = Vec::new();
    for i in 0..=nu {
        let a = -PI / 2.0 + PI * i as f64 / nu as f64;
        let center = Vector3::new(body_r - tube + major * a.cos(), center_y + major * a.sin(), 0.0);
        let radial = Vector3::new(a.cos(), a.sin(), 0.0);
        for j in 0..nv {
            let b = 2.0 * PI * j as f64 / nv as f64;
            vertices.push(center + (radial * b.cos() + Vector3::z() * b.sin()) * tube);
        }
    }
    let mut triangles = Vec::new();
    for i in 0..nu {
        for j in 0..nv {
            let a = i * nv + j;
            let b = i * nv + (j + 1) % nv;
            let c = (i + 1) * nv + j;
            let d = (i + 1) * nv + (j + 1) % nv;
            triangles.push([a, c, d]);
            triangles.push([a, d, b]);
        }
    }
    let n = triangles.len();
    Mesh {
        vertices,
        triangles,
        albedo: vec![color; n],
    }
}

pub fn cup(radius: f64, height: f64, wall: f64, with_handle: bool, color: [f32; 3]) -> Mesh {
    let base = wall.max(0.004);
    let profile = [
        (0.0, 0.0),
        (radius, 0.0),
        (radius, height),
        (radius - wall, height),
        (radius - wall, base),
        (0.0, base),
    ];
    let mut mesh = lathe(&profile, 32, color);
    if with_handle {
        let major = height * 0.3;
        mesh.merge(&handle(radius, height * 0.5, major, wall.max(height * 0.05), color));
    }
    mesh
}

pub fn bottle(radius: f64, height: f64, neck_r: f64, color: [f32; 3]) -> Mesh {
    let profile = [
        (0.0, 0.0),
        (radius, 0.0),
        (radius, height * 0.6),
        (radius * 0.8, height * 0.7),
        (neck_r * 1.2, height * 0.8),
        (neck_r, height * 0.85),
        (neck_r, height),
        (0.0, height),
    ];
    lathe(&profile, 32, color)
}

/// Base slab with a keyboard face and a lid opened by `open_deg` about the rear hinge.
pub fn laptop(width: f64, depth: f64, thickness: f64, open_deg: f64, body: [f32; 3], keys: [f32; 3], screen: [f32; 3]) -> Mesh {
    let mut base_colors = [body; 6];
    base_colors[3] = keys;
    let base = cuboid(width, thickness, depth, base_colors)
        .transformed(|v| v + Vector3::new(0.0, thickness / 2.0, 0.0));
    let mut lid_colors = [body; 6];
    // The screen faces the keyboard when closed.
    lid_colors[2] = screen;
    let lid = cuboid(width, thickness, depth, lid_colors)
        .transformed(|v| v + Vector3::new(0.0, thickness * 1.5, 0.0));
    let hinge = Vector3::new(0.0, thickness, -depth / 2.0);
    let rot = crate::geometry::axis_angle(&Vector3::x(), -open_deg.to_radians());
    let lid = lid.transformed(|v| rot * (v - hinge) + hinge);
    let mut mesh = base;
    mesh.merge(&lid);
    mesh
}

/// Built-in procedural categories.
pub const BUILTIN_CATEGORIES: [&str; 3] = ["cup", "bottle", "laptop"];

/// Per-category metadata for evaluation.
pub fn builtin_is_symmetric(category: &str, model_index: usize) -> bool {
    match category {
        "bottle" => true,
        "cup" => !cup_has_handle(model_index),
        _ => false,
    }
}

/// Every third cup is handle-less (a plain cylinder).
pub fn cup_has_handle(model_index: usize) -> bool {
    model_index % 3 != 2
}

/// Deterministic procedural model `index` of a built-in category.
pub fn builtin_model(category: &str, index: usize, seed: u64) -> Result<Mesh> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ hash_name(category));
    let mut jitter = |lo: f64, hi: f64| rng.random_range(lo..hi);
    match category {
        "cup" => {
            let r = jitter(0.035, 0.05);
            let h = jitter(0.08, 0.12);
            let color = [0.8, 0.75, 0.65];
            Ok(cup(r, h, r * 0.12, cup_has_handle(index), color))
        }
        "bottle" => {
            let r = jitter(0.03, 0.045);
            let h = jitter(0.2, 0.28);
            Ok(bottle(r, h, r * 0.35, [0.3, 0.6, 0.4]))
        }
        "laptop" => {
            let w = jitter(0.3, 0.36);
            let d = jitter(0.21, 0.25);
            let open = jitter(95.0, 125.0);
            Ok(laptop(w, d, 0.015, open, [0.55, 0.55, 0.6], [0.25, 0.25, 0.3], [0.1, 0.15, 0.4]))
        }
        other => Err(Error::invalid(format!(
            "unknown built-in category '{other}' (expected one of {BUILTIN_CATEGORIES:?})"
        ))),
    }
}

fn hash_name(name: &str) -> u64 {
    // FNV-1a
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

/// ASCII OBJ with `v` and triangular `f` records only; everything else is ignored.
pub fn load_obj(path: &Path, color: [f32; 3]) -> Result<Mesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let c: Vec<f64> = parts
                    .take(3)
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::format(path, format!("line {}: {e}", lineno + 1)))?;
                if c.len() != 3 {
                    return Err(Error::format(path, format!("line {}: vertex needs 3 coordinates", lineno + 1)));
                }
                vertices.push(Vector3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = parts
                    .map(|s| {
                        s.split('/')
                            .next()
                            .and_then(|i| i.parse::<usize>().ok())
                            .filter(|&i| i >= 1)
                            .map(|i| i - 1)
                    })
                    .collect::<Option<_>>()
                    .ok_or_else(|| Error::format(path, format!("line {}: bad face index", lineno + 1)))?;
                if idx.len() != 3 {
                    return Err(Error::format(path, format!("line {}: only triangular faces are supported", lineno + 1)));
                }
                triangles.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    Mesh::uniform(vertices, triangles, color).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::canonicalize_mesh;

    #[test]
    fn builtin_models_are_valid_and_deterministic() {
        for cat in BUILTIN_CATEGORIES {
            for i in 0..3 {
                let a = builtin_model(cat, i, 7).unwrap();
                a.validate().unwrap();
                assert_eq!(a, builtin_model(cat, i, 7).unwrap());
                let (_, diag) = canonicalize_mesh(&a).unwrap();
                assert!(diag > 0.05 && diag < 1.0, "{cat}: {diag}");
            }
        }
        assert!(builtin_model("teapot", 0, 0).is_err());
    }

    #[test]
    fn handle_breaks_the_x_symmetry() {
        let with = builtin_model("cup", 0, 1).unwrap();
        let (lo, hi) = with.bounds();
        assert!(hi.x > -lo.x + 0.01);
        let without = builtin_model("cup", 2, 1).unwrap();
        let (lo, hi) = without.bounds();
        assert!((hi.x + lo.x).abs() < 1e-9);
    }

    #[test]
    fn laptop_lid_is_open() {
        let m = builtin_model("laptop", 0, 3).unwrap();
        let (lo, hi) = m.bounds();
        assert!(hi.y - lo.y > 0.15, "lid should stand up: {:?}", hi - lo);
    }

    #[test]
    fn obj_reader() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tri.obj");
        std::fs::write(&p, "# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n").unwrap();
        let m = load_obj(&p, [1.0; 3]).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
        std::fs::write(&p, "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n").unwrap();
        assert!(load_obj(&p, [1.0; 3]).is_err());
    }
}
