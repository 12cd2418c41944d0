//! On-disk dataset layout:
//!
//! ```text
//! root/manifest.json
//! root/<category>/<model>/<view>_{rgb,depth,normal,nocs,mask}.png
//! root/<category>/<model>/<view>_meta.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::render::RenderOutput;
use crate::error::{Error, Result};
use crate::geometry::imageio;
use crate::geometry::{Intrinsics, RigidPose};

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub name: String,
    pub views: usize,
    pub diagonal_norm: f64,
    /// Rotationally symmetric about the canonical y-axis.
    pub symmetric: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryEntry {
    pub name: String,
    pub id: u32,
    pub models: Vec<ModelEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub subdiv: u32,
    /// Orbit radius in units of the object diagonal.
    pub radius_factor: f64,
    pub intrinsics: Intrinsics,
    pub category_count: usize,
    pub categories: Vec<CategoryEntry>,
    pub view_count: usize,
}

impl Manifest {
    pub fn category_id(&self, name: &str) -> Option<u32> {
        self.categories.iter().find(|c| c.name == name).map(|c| c.id)
    }

    pub fn category_name(&self, id: u32) -> Option<&str> {
        self.categories.iter().find(|c| c.id == id).map(|c| c.name.as_str())
    }

    fn validate(&self, path: &Path) -> Result<()> {
        if self.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::format(path, format!("unsupported format version {}", self.format_version)));
        }
        if self.category_count != self.categories.len() {
            return Err(Error::format(
                path,
                format!(
                    "category count mismatch: manifest says {}, lists {}",
                    self.category_count,
                    self.categories.len()
                ),
            ));
        }
        let listed: usize = self.categories.iter().flat_map(|c| &c.models).map(|m| m.views).sum();
        if listed != self.view_count {
            return Err(Error::format(path, format!("view count mismatch: {} vs {listed}", self.view_count)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewMeta {
    /// World→camera 4x4, row-major.
    pub camera_pose: [f64; 16],
    pub diagonal_norm: f64,
    pub category_id: u32,
    pub category: String,
    pub model: String,
    pub view: usize,
}

/// One rendered view with its identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetView {
    pub category: String,
    pub model: String,
    pub view: usize,
    pub render: RenderOutput,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub views: Vec<DatasetView>,
}

pub fn view_prefix(root: &Path, category: &str, model: &str, view: usize) -> PathBuf {
    root.join(category).join(model).join(format!("{view:03}"))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Write a single view's images and metadata under `root`.
pub fn write_view(root: &Path, view: &DatasetView) -> Result<()> {
    let prefix = view_prefix(root, &view.category, &view.model, view.view);
    let dir = prefix.parent().expect("view prefix has a parent");
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let r = &view.render;
    imageio::write_rgb(&with_suffix(&prefix, "_rgb.png"), &r.rgb)?;
    imageio::write_depth(&with_suffix(&prefix, "_depth.png"), &r.depth)?;
    imageio::write_normals(&with_suffix(&prefix, "_normal.png"), &r.normals)?;
    imageio::write_nocs(&with_suffix(&prefix, "_nocs.png"), &r.nocs)?;
    imageio::write_mask(&with_suffix(&prefix, "_mask.png"), &r.mask)?;
    let meta = ViewMeta {
        camera_pose: r.camera.to_row_major(),
        diagonal_norm: r.scale,
        category_id: r.category,
        category: view.category.clone(),
        model: view.model.clone(),
        view: view.view,
    };
    write_json(&with_suffix(&prefix, "_meta.json"), &meta)
}

/// Write all views plus the manifest.
pub fn write_dataset(root: &Path, manifest: &Manifest, views: &[DatasetView]) -> Result<()> {
    manifest.validate(&root.join("manifest.json"))?;
    if views.len() != manifest.view_count {
        return Err(Error::invalid(format!(
            "manifest lists {} views but {} were given",
            manifest.view_count,
            views.len()
        )));
    }
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    for v in views {
        write_view(root, v)?;
    }
    write_manifest(root, manifest)
}

pub fn write_manifest(root: &Path, manifest: &Manifest) -> Result<()> {
    write_json(&root.join("manifest.json"), manifest)
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join("manifest.json");
    if !path.exists() {
        return Err(Error::format(root, format!("missing manifest: {}", path.display())));
    }
    let manifest: Manifest = read_json(&path)?;
    manifest.validate(&path)?;
    for cat in &manifest.categories {
        let dir = root.join(&cat.name);
        if !dir.is_dir() {
            return Err(Error::format(&dir, "category directory listed in manifest is missing"));
        }
    }
    Ok(manifest)
}

/// Metadata of one view without its images.
pub fn read_view_meta(prefix: &Path) -> Result<ViewMeta> {
    read_json(&with_suffix(prefix, "_meta.json"))
}

/// Load one view from its path prefix (e.g. `root/cup/cup_00/017`).
pub fn read_view(prefix: &Path) -> Result<DatasetView> {
    let meta: ViewMeta = read_json(&with_suffix(prefix, "_meta.json"))?;
    let mask = imageio::read_mask(&with_suffix(prefix, "_mask.png"))?;
    let depth = imageio::read_depth(&with_suffix(prefix, "_depth.png"))?;
    let rgb = imageio::read_rgb(&with_suffix(prefix, "_rgb.png"))?;
    let normals = imageio::read_normals(&with_suffix(prefix, "_normal.png"))?;
    let nocs_path = with_suffix(prefix, "_nocs.png");
    let nocs = imageio::read_nocs(&nocs_path, &mask)?;
    let camera = RigidPose::from_row_major(&meta.camera_pose)
        .map_err(|e| Error::format(with_suffix(prefix, "_meta.json"), e.to_string()))?;
    for (what, ok) in [
        ("depth", depth.same_dims(&mask)),
        ("rgb", rgb.same_dims(&mask)),
        ("normal", normals.same_dims(&mask)),
    ] {
        if !ok {
            return Err(Error::format(prefix, format!("{what} image size differs from mask")));
        }
    }
    Ok(DatasetView {
        category: meta.category,
        model: meta.model,
        view: meta.view,
        render: RenderOutput {
            rgb,
            depth,
            mask,
            normals,
            nocs,
            camera,
            scale: meta.diagonal_norm,
            category: meta.category_id,
        },
    })
}

pub fn read_dataset(root: &Path) -> Result<Dataset> {
    let manifest = read_manifest(root)?;
    let mut views = Vec::with_capacity(manifest.view_count);
    for cat in &manifest.categories {
        for model in &cat.models {
            for v in 0..model.views {
                views.push(read_view(&view_prefix(root, &cat.name, &model.name, v))?);
            }
        }
    }
    Ok(Dataset { manifest, views })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::canonicalize_mesh;
    use crate::synthgen::camera::look_at_pose;
    use crate::synthgen::render::{render_view, Lighting};
    use crate::synthgen::shapes::builtin_model;
    use nalgebra::Vector3;

    fn one_view_dataset() -> (Manifest, Vec<DatasetView>) {
        let (mesh, diag) = canonicalize_mesh(&builtin_model("cup", 0, 1).unwrap()).unwrap();
        let intr = Intrinsics::square_default(32);
        let cam = look_at_pose(&Vector3::new(0.2, 0.5, 0.8).normalize(), 2.0 * diag, &Vector3::y());
        let render = render_view(&mesh, diag, &cam, &intr, &Lighting::baseline(), 1).unwrap();
        let manifest = Manifest {
            format_version: DATASET_FORMAT_VERSION,
            seed: 1,
            subdiv: 0,
            radius_factor: 2.0,
            intrinsics: intr,
            category_count: 1,
            categories: vec![CategoryEntry {
                name: "cup".into(),
                id: 1,
                models: vec![ModelEntry {
                    name: "cup_00".into(),
                    views: 1,
                    diagonal_norm: diag,
                    symmetric: false,
                }],
            }],
            view_count: 1,
        };
        let view = DatasetView {
            category: "cup".into(),
            model: "cup_00".into(),
            view: 0,
            render,
        };
        (manifest, vec![view])
    }

    #[test]
    fn write_then_read_gives_identical_pngs() {
        let dir = tempfile::tempdir().unwrap();
        let (manifest, views) = one_view_dataset();
        write_dataset(dir.path(), &manifest, &views).unwrap();
        let ds = read_dataset(dir.path()).unwrap();
        assert_eq!(ds.manifest, manifest);
        let copy = tempfile::tempdir().unwrap();
        write_dataset(copy.path(), &ds.manifest, &ds.views).unwrap();
        // Normals are renormalized on read, so re-encoding may move a channel by one step.
        let a = crate::geometry::imageio::read_normals(&dir.path().join("cup/cup_00/000_normal.png")).unwrap();
        let b = crate::geometry::imageio::read_normals(&copy.path().join("cup/cup_00/000_normal.png")).unwrap();
        for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
            for c in 0..3 {
                assert!((p[c] - q[c]).abs() <= 2.5 / 255.0);
            }
        }
        for suffix in ["rgb", "depth", "nocs", "mask"] {
            let rel = format!("cup/cup_00/000_{suffix}.png");
            assert_eq!(
                fs::read(dir.path().join(&rel)).unwrap(),
                fs::read(copy.path().join(&rel)).unwrap(),
                "{rel}"
            );
        }
        let v = &ds.views[0].render;
        assert_eq!(v.mask, views[0].render.mask);
        assert_eq!(v.nocs.mask(), &v.mask);
    }

    #[test]
    fn empty_directory_names_the_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("manifest.json"), "{err}");
    }

    #[test]
    fn category_count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (mut manifest, views) = one_view_dataset();
        write_dataset(dir.path(), &manifest, &views).unwrap();
        manifest.category_count = 2;
        write_manifest(dir.path(), &manifest).unwrap();
        let err = read_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("category count mismatch"), "{err}");
    }

    #[test]
    fn missing_view_file_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let (manifest, views) = one_view_dataset();
        write_dataset(dir.path(), &manifest, &views).unwrap();
        fs::remove_file(dir.path().join("cup/cup_00/000_depth.png")).unwrap();
        let err = read_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("000_depth.png"), "{err}");
    }
}
