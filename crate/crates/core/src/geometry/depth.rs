use nalgebra::Vector3;

use super::grid::Mask;
use super::types::{DepthMap, Intrinsics, NormalMap, PointCloud};
use crate::error::{Error, Result};

/// Lift every masked pixel with positive depth into the camera frame.
pub fn backproject(depth: &DepthMap, intr: &Intrinsics, mask: &Mask) -> Result<PointCloud> {
    intr.ensure_grid(depth, "depth")?;
    intr.ensure_grid(mask, "mask")?;
    let mut points = Vec::new();
    let mut pixels = Vec::new();
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            let z = *depth.get(u, v);
            if *mask.get(u, v) && z > 0.0 {
                points.push(intr.backproject_pixel(u as f64, v as f64, z as f64));
                pixels.push(depth.index(u, v));
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(PointCloud {
        points,
        pixels: Some(pixels),
    })
}

/// Camera-facing normals from central differences of backprojected neighbors.
///
/// A pixel gets a normal only when it and its four neighbors carry valid depth.
pub fn normals_from_depth(depth: &DepthMap, intr: &Intrinsics) -> Result<NormalMap> {
    intr.ensure_grid(depth, "depth")?;
    let (w, h) = depth.dims();
    let point = |u: usize, v: usize| -> Option<Vector3<f64>> {
        let z = *depth.get(u, v);
        (z > 0.0).then(|| intr.backproject_pixel(u as f64, v as f64, z as f64))
    };
    let mut out = NormalMap::new(w, h, [0.0; 3]);
    if w < 3 || h < 3 {
        return Ok(out);
    }
    for v in 1..h - 1 {
        for u in 1..w - 1 {
            let (Some(c), Some(l), Some(r), Some(t), Some(b)) = (
                point(u, v),
                point(u - 1, v),
                point(u + 1, v),
                point(u, v - 1),
                point(u, v + 1),
            ) else {
                continue;
            };
            let mut n = (r - l).cross(&(b - t));
            let norm = n.norm();
            if !(norm > 0.0) || !norm.is_finite() {
                continue;
            }
            n /= norm;
            if n.dot(&c) > 0.0 {
                n = -n;
            }
            out.set(u, v, [n.x as f32, n.y as f32, n.z as f32]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::grid::Grid;

    fn intr(size: usize, f: f64) -> Intrinsics {
        Intrinsics::new(f, f, size as f64 / 2.0, size as f64 / 2.0, size, size).unwrap()
    }

    #[test]
    fn principal_point_backprojects_to_optical_axis() {
        let k = intr(8, 10.0);
        let mut depth = Grid::new(8, 8, 0.0f32);
        depth.set(4, 4, 1.0);
        let cloud = backproject(&depth, &k, &Grid::new(8, 8, true)).unwrap();
        assert_eq!(cloud.len(), 1);
        assert_eq!(cloud.points[0], Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(cloud.pixels.unwrap(), vec![4 * 8 + 4]);
    }

    #[test]
    fn off_axis_pixel_on_plane() {
        let k = Intrinsics::new(100.0, 100.0, 50.0, 60.0, 200, 200).unwrap();
        let depth = Grid::new(200, 200, 2.0f32);
        let mut mask = Grid::new(200, 200, false);
        mask.set(150, 60, true);
        let cloud = backproject(&depth, &k, &mask).unwrap();
        assert!((cloud.points[0] - Vector3::new(2.0, 0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn empty_mask_is_error() {
        let k = intr(4, 5.0);
        let depth = Grid::new(4, 4, 1.0f32);
        let err = backproject(&depth, &k, &Grid::new(4, 4, false)).unwrap_err();
        assert!(matches!(err, Error::EmptyCloud));
    }

    #[test]
    fn fronto_parallel_plane_faces_camera() {
        let k = intr(16, 20.0);
        let depth = Grid::new(16, 16, 1.5f32);
        let n = normals_from_depth(&depth, &k).unwrap();
        for v in 1..15 {
            for u in 1..15 {
                assert_eq!(*n.get(u, v), [0.0, 0.0, -1.0]);
            }
        }
        assert_eq!(*n.get(0, 0), [0.0; 3]);
    }

    #[test]
    fn tilted_plane_normal() {
        // Plane through (0,0,2) with normal (0,-1,-1)/sqrt2: z = 2 - y.
        let k = intr(32, 40.0);
        let depth = Grid::from_fn(32, 32, |_, v| {
            let ry = (v as f64 - k.cy) / k.fy;
            (2.0 / (1.0 + ry)) as f32
        });
        let n = normals_from_depth(&depth, &k).unwrap();
        let s = std::f32::consts::FRAC_1_SQRT_2;
        for v in 1..31 {
            for u in 1..31 {
                let p = n.get(u, v);
                assert!(p[0].abs() < 1e-3 && (p[1] + s).abs() < 1e-3 && (p[2] + s).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn isolated_pixel_has_zero_normal() {
        let k = intr(8, 10.0);
        let mut depth = Grid::new(8, 8, 0.0f32);
        depth.set(3, 3, 1.0);
        let n = normals_from_depth(&depth, &k).unwrap();
        assert!(n.as_slice().iter().all(|p| *p == [0.0; 3]));
    }
}
