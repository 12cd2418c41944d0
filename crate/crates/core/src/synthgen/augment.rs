use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::render::Lighting;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::geometry::{Grid, Mask, NocsMap, NormalMap, RgbImage, RigidPose, NOCS_BACKGROUND};

/// Ranges for the two training-time augmentations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    /// In-plane rotation range in degrees, `[lo, hi)`.
    pub angle_range: (f64, f64),
    pub ambient_range: (f32, f32),
    pub diffuse_range: (f32, f32),
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            angle_range: (0.0, 360.0),
            ambient_range: (0.3, 0.8),
            diffuse_range: (0.2, 0.7),
        }
    }
}

impl AugmentParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.angle_range.0 < self.angle_range.1
            && self.ambient_range.0 <= self.ambient_range.1
            && self.diffuse_range.0 <= self.diffuse_range.1
            && self.ambient_range.0 >= 0.0
            && self.diffuse_range.0 >= 0.0
            && self.ambient_range.1 + self.diffuse_range.1 <= 1.5;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid augmentation ranges {self:?}")))
        }
    }

    pub fn sample_angle(&self, rng: &mut impl Rng) -> f64 {
        rng.random_range(self.angle_range.0..self.angle_range.1)
    }

    /// Ambient/diffuse from their ranges; direction uniform on the hemisphere facing the scene (z > 0).
    pub fn sample_lighting(&self, rng: &mut impl Rng) -> Lighting {
        let ambient = sample_range(rng, self.ambient_range);
        let diffuse = sample_range(rng, self.diffuse_range);
        let mut normal = || -> f64 { StandardNormal.sample(rng) };
        let mut d = Vector3::new(normal(), normal(), normal());
        while d.norm() < 1e-9 {
            d = Vector3::new(normal(), normal(), normal());
        }
        d.z = d.z.abs();
        Lighting {
            ambient,
            diffuse,
            direction: d.normalize(),
        }
    }
}

fn sample_range(rng: &mut impl Rng, (lo, hi): (f32, f32)) -> f32 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Rescale foreground colors by `ambient + diffuse * max(0, -n·light_dir)`, clamped to `[0,1]`.
///
/// Foreground is every pixel with a non-zero normal; other pixels pass through.
pub fn phong_relight(
    rgb: &RgbImage,
    normals: &NormalMap,
    ambient: f32,
    diffuse: f32,
    light_dir: &Vector3<f64>,
) -> Result<RgbImage> {
    rgb.ensure_dims(normals, "rgb vs normals")?;
    let l = light_dir.normalize();
    let data = rgb
        .as_slice()
        .iter()
        .zip(normals.as_slice())
        .map(|(c, n)| {
            if *n == [0.0; 3] {
                return *c;
            }
            let cos = -(n[0] as f64 * l.x + n[1] as f64 * l.y + n[2] as f64 * l.z);
            let k = ambient + diffuse * cos.max(0.0) as f32;
            c.map(|v| (v * k).clamp(0.0, 1.0))
        })
        .collect();
    Grid::from_vec(rgb.width(), rgb.height(), data)
}

/// Square training tuple that moves through augmentation together.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewTuple {
    pub rgb: RgbImage,
    pub normals: NormalMap,
    pub nocs: NocsMap,
    pub features: Option<FeatureMap>,
    pub camera: RigidPose,
}

impl ViewTuple {
    pub fn mask(&self) -> &Mask {
        self.nocs.mask()
    }

    pub fn size(&self) -> usize {
        self.rgb.width()
    }
}

fn exact_trig(angle_deg: f64) -> (f64, f64) {
    let turns = angle_deg.rem_euclid(360.0);
    if turns == 0.0 {
        (1.0, 0.0)
    } else if turns == 90.0 {
        (0.0, 1.0)
    } else if turns == 180.0 {
        (-1.0, 0.0)
    } else if turns == 270.0 {
        (0.0, -1.0)
    } else {
        let r = angle_deg.to_radians();
        (r.cos(), r.sin())
    }
}

/// Rotate every image of the tuple about the image center by `angle_deg`.
///
/// Image content at `q` moves to `c + R(q - c)` with `R` acting on `(x, y)`
/// pixel coordinates (y down). Normal vectors get the same rotation in the
/// camera x–y plane and the camera pose is composed with the matching roll.
/// NOCS values are coordinates in the object frame and are not changed.
pub fn inplane_rotate(sample: &ViewTuple, angle_deg: f64) -> Result<ViewTuple> {
    let s = sample.size();
    if sample.rgb.height() != s {
        return Err(Error::shape("in-plane rotation needs square images"));
    }
    sample.rgb.ensure_dims(&sample.normals, "rgb vs normals")?;
    sample.rgb.ensure_dims(sample.nocs.values(), "rgb vs nocs")?;
    let (cos, sin) = exact_trig(angle_deg);
    let c = s as f64 / 2.0;
    // Inverse map: output pixel center p samples source at c + R^T (p - c).
    let source = |i: usize, j: usize| -> Option<(f64, f64)> {
        let px = i as f64 + 0.5 - c;
        let py = j as f64 + 0.5 - c;
        let x = c + cos * px + sin * py;
        let y = c - sin * px + cos * py;
        (x >= 0.0 && x < s as f64 && y >= 0.0 && y < s as f64).then_some((x, y))
    };
    let nearest = |i: usize, j: usize| source(i, j).map(|(x, y)| (x as usize, y as usize));

    let mask: Mask = Grid::from_fn(s, s, |i, j| nearest(i, j).is_some_and(|(x, y)| *sample.mask().get(x, y)));
    let nocs_vals = Grid::from_fn(s, s, |i, j| match nearest(i, j) {
        Some((x, y)) => *sample.nocs.values().get(x, y),
        None => NOCS_BACKGROUND,
    });
    let nocs = NocsMap::new(nocs_vals, mask)?;

    let rgb = Grid::from_fn(s, s, |i, j| match source(i, j) {
        Some((x, y)) => bilinear3(&sample.rgb, x, y),
        None => [1.0; 3],
    });
    let (cf, sf) = (cos as f32, sin as f32);
    let normals = Grid::from_fn(s, s, |i, j| {
        let n = match source(i, j) {
            Some((x, y)) => bilinear3(&sample.normals, x, y),
            None => return [0.0; 3],
        };
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if len < 1e-6 {
            return [0.0; 3];
        }
        let n = n.map(|v| v / len);
        [cf * n[0] - sf * n[1], sf * n[0] + cf * n[1], n[2]]
    });
    let features = sample.features.as_ref().map(|fm| {
        let mut out = FeatureMap::zeros(s, s, fm.dim(), fm.provenance());
        for j in 0..s {
            for i in 0..s {
                if let Some((x, y)) = nearest(i, j) {
                    let (xs, ys) = (x * fm.width() / s, y * fm.height() / s);
                    out.pixel_mut(i, j).copy_from_slice(fm.pixel(xs, ys));
                }
            }
        }
        out
    });
    let roll = Matrix3::new(cos, -sin, 0.0, sin, cos, 0.0, 0.0, 0.0, 1.0);
    let camera = RigidPose::new(roll, Vector3::zeros()).compose(&sample.camera);
    Ok(ViewTuple {
        rgb,
        normals,
        nocs,
        features,
        camera,
    })
}

fn bilinear3(img: &Grid<[f32; 3]>, x: f64, y: f64) -> [f32; 3] {
    let s = img.width() as isize;
    let fx = x - 0.5;
    let fy = y - 0.5;
    let (xf, yf) = (fx.floor(), fy.floor());
    let (ax, ay) = ((fx - xf) as f32, (fy - yf) as f32);
    let xi = |d: isize| (xf as isize + d).clamp(0, s - 1) as usize;
    let yi = |d: isize| (yf as isize + d).clamp(0, img.height() as isize - 1) as usize;
    let (a, b, c, d) = (img.get(xi(0), yi(0)), img.get(xi(1), yi(0)), img.get(xi(0), yi(1)), img.get(xi(1), yi(1)));
    let mut out = [0.0; 3];
    for k in 0..3 {
        out[k] = a[k] * (1.0 - ax) * (1.0 - ay) + b[k] * ax * (1.0 - ay) + c[k] * (1.0 - ax) * ay + d[k] * ax * ay;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Provenance;
    use rand::SeedableRng;

    fn tuple(s: usize) -> ViewTuple {
        let mask = Grid::from_fn(s, s, |x, y| x > 1 && y > 2 && x + y < s + 3);
        let nocs_vals = Grid::from_fn(s, s, |x, y| [x as f32 / s as f32, y as f32 / s as f32, 0.25]);
        let nocs = NocsMap::new(nocs_vals, mask.clone()).unwrap();
        let normals = Grid::from_fn(s, s, |x, y| {
            if *mask.get(x, y) {
                let v = [0.3f32, -0.2, -0.9];
                let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                v.map(|c| c / l)
            } else {
                [0.0; 3]
            }
        });
        let rgb = Grid::from_fn(s, s, |x, y| if *mask.get(x, y) { [0.2, 0.4, x as f32 / s as f32] } else { [1.0; 3] });
        let mut fm = FeatureMap::zeros(s, s, 2, Provenance::StandIn);
        for y in 0..s {
            for x in 0..s {
                fm.pixel_mut(x, y).copy_from_slice(&[x as f32, y as f32]);
            }
        }
        ViewTuple {
            rgb,
            normals,
            nocs,
            features: Some(fm),
            camera: RigidPose::identity(),
        }
    }

    #[test]
    fn identity_lighting_is_exact() {
        let t = tuple(8);
        let out = phong_relight(&t.rgb, &t.normals, 1.0, 0.0, &Vector3::z()).unwrap();
        assert_eq!(out, t.rgb);
    }

    #[test]
    fn head_on_diffuse_is_identity_and_grazing_is_black() {
        let rgb = Grid::new(4, 4, [0.3f32, 0.6, 0.9]);
        let normals = Grid::new(4, 4, [0.0f32, 0.0, -1.0]);
        let out = phong_relight(&rgb, &normals, 0.0, 1.0, &Vector3::z()).unwrap();
        assert_eq!(out, rgb);
        let dark = phong_relight(&rgb, &normals, 0.0, 1.0, &Vector3::x()).unwrap();
        assert!(dark.as_slice().iter().all(|c| *c == [0.0; 3]));
    }

    #[test]
    fn relight_is_bounded_and_monotone_in_ambient() {
        let t = tuple(10);
        let l = Vector3::new(0.2, 0.1, 0.9);
        let lo = phong_relight(&t.rgb, &t.normals, 0.3, 0.7, &l).unwrap();
        let hi = phong_relight(&t.rgb, &t.normals, 0.8, 0.7, &l).unwrap();
        for (a, b) in lo.as_slice().iter().zip(hi.as_slice()) {
            for k in 0..3 {
                assert!((0.0..=1.0).contains(&a[k]) && a[k] <= b[k]);
            }
        }
    }

    #[test]
    fn zero_angle_is_identity() {
        let t = tuple(12);
        assert_eq!(inplane_rotate(&t, 0.0).unwrap(), t);
    }

    #[test]
    fn four_quarter_turns_restore_nearest_channels() {
        let t = tuple(12);
        let mut r = t.clone();
        for _ in 0..4 {
            r = inplane_rotate(&r, 90.0).unwrap();
        }
        assert_eq!(r.nocs, t.nocs);
        assert_eq!(r.features, t.features);
        for (a, b) in r.rgb.as_slice().iter().zip(t.rgb.as_slice()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-5);
            }
        }
        assert!((r.camera.rotation - t.camera.rotation).abs().max() < 1e-12);
    }

    #[test]
    fn quarter_turn_moves_content_and_rotates_normals() {
        let t = tuple(12);
        let r = inplane_rotate(&t, 90.0).unwrap();
        // Content at (x, y) moves to (s - 1 - y, x) for a 90° turn with y down.
        for y in 0..12 {
            for x in 0..12 {
                assert_eq!(r.mask().get(11 - y, x), t.mask().get(x, y));
            }
        }
        let n0 = t.normals.get(4, 6);
        let n1 = r.normals.get(11 - 6, 4);
        assert!((n1[0] + n0[1]).abs() < 1e-5 && (n1[1] - n0[0]).abs() < 1e-5);
    }

    #[test]
    fn fronto_parallel_normals_are_fixed() {
        let mut t = tuple(10);
        t.normals = t.nocs.mask().map(|&m| if m { [0.0, 0.0, -1.0] } else { [0.0; 3] });
        let r = inplane_rotate(&t, 37.0).unwrap();
        for n in r.normals.as_slice() {
            assert!(*n == [0.0; 3] || (n[0].abs() < 1e-6 && n[1].abs() < 1e-6 && (n[2] + 1.0).abs() < 1e-6));
        }
    }

    #[test]
    fn foreground_multiset_is_preserved_up_to_boundary() {
        let t = tuple(16);
        let r = inplane_rotate(&t, 33.0).unwrap();
        let collect = |n: &NocsMap| {
            let mut v: Vec<[u32; 3]> = n
                .values()
                .as_slice()
                .iter()
                .zip(n.mask().as_slice())
                .filter(|(_, &m)| m)
                .map(|(p, _)| p.map(|c| (c * 1e4) as u32))
                .collect();
            v.sort();
            v
        };
        let (a, b) = (collect(&t.nocs), collect(&r.nocs));
        let perimeter = 4 * 16;
        assert!((a.len() as isize - b.len() as isize).unsigned_abs() <= perimeter);
        for v in &b {
            assert!(a.binary_search(v).is_ok());
        }
    }

    #[test]
    fn sampled_lighting_respects_ranges() {
        let p = AugmentParams::default();
        p.validate().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let l = p.sample_lighting(&mut rng);
            assert!((0.3..0.8).contains(&l.ambient) && (0.2..0.7).contains(&l.diffuse));
            assert!(l.direction.z >= 0.0 && (l.direction.norm() - 1.0).abs() < 1e-12);
            let a = p.sample_angle(&mut rng);
            assert!((0.0..360.0).contains(&a));
        }
        let bad = AugmentParams { ambient_range: (0.3, 1.0), diffuse_range: (0.2, 0.7), ..p };
        assert!(bad.validate().is_err());
    }
}
