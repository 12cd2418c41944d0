use rayon::prelude::*;

use super::camera::CameraRig;
use super::dataset::{CategoryEntry, DatasetView, Manifest, ModelEntry, DATASET_FORMAT_VERSION};
use super::render::{render_view, Lighting};
use super::shapes::{builtin_is_symmetric, builtin_model};
use crate::error::{Error, Result};
use crate::geometry::{canonicalize_mesh, Intrinsics, Mesh};

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub categories: Vec<String>,
    pub models_per_category: usize,
    pub subdiv: u32,
    pub image_size: usize,
    pub radius_factor: f64,
    pub seed: u64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            categories: vec!["cup".into(), "laptop".into()],
            models_per_category: 3,
            subdiv: 2,
            image_size: 64,
            radius_factor: 2.0,
            seed: 0,
        }
    }
}

/// A named source mesh in metric units.
pub struct SourceModel {
    pub category: String,
    pub name: String,
    pub mesh: Mesh,
    pub symmetric: bool,
}

/// Render every model from every icosphere viewpoint.
///
/// Category IDs are assigned 1.. in the order categories first appear; 0 is reserved.
pub fn generate(models: &[SourceModel], opts: &GenerateOptions) -> Result<(Manifest, Vec<DatasetView>)> {
    if opts.image_size < 8 {
        return Err(Error::invalid("image size must be at least 8"));
    }
    let intr = Intrinsics::square_default(opts.image_size);
    let mut categories: Vec<CategoryEntry> = Vec::new();
    let mut jobs = Vec::new();
    for m in models {
        let (canonical, diag) = canonicalize_mesh(&m.mesh)?;
        let rig = CameraRig::icosphere(opts.subdiv, opts.radius_factor * diag, intr)?;
        let id = match categories.iter().position(|c| c.name == m.category) {
            Some(i) => i as u32 + 1,
            None => {
                categories.push(CategoryEntry {
                    name: m.category.clone(),
                    id: categories.len() as u32 + 1,
                    models: Vec::new(),
                });
                categories.len() as u32
            }
        };
        categories[id as usize - 1].models.push(ModelEntry {
            name: m.name.clone(),
            views: rig.poses.len(),
            diagonal_norm: diag,
            symmetric: m.symmetric,
        });
        for (v, pose) in rig.poses.iter().enumerate() {
            jobs.push((m.category.clone(), m.name.clone(), v, canonical.clone(), diag, *pose, id));
        }
    }
    let light = Lighting::baseline();
    let views = jobs
        .into_par_iter()
        .map(|(category, model, view, mesh, diag, pose, id)| {
            let render = render_view(&mesh, diag, &pose, &intr, &light, id)?;
            Ok(DatasetView {
                category,
                model,
                view,
                render,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        format_version: DATASET_FORMAT_VERSION,
        seed: opts.seed,
        subdiv: opts.subdiv,
        radius_factor: opts.radius_factor,
        intrinsics: intr,
        category_count: categories.len(),
        view_count: views.len(),
        categories,
    };
    Ok((manifest, views))
}

/// Procedural models for `opts.categories`.
pub fn builtin_models(opts: &GenerateOptions) -> Result<Vec<SourceModel>> {
    let mut out = Vec::new();
    for cat in &opts.categories {
        for i in 0..opts.models_per_category {
            out.push(SourceModel {
                category: cat.clone(),
                name: format!("{cat}_{i:02}"),
                mesh: builtin_model(cat, i, opts.seed)?,
                symmetric: builtin_is_symmetric(cat, i),
            });
        }
    }
    Ok(out)
}

pub fn generate_builtin(opts: &GenerateOptions) -> Result<(Manifest, Vec<DatasetView>)> {
    generate(&builtin_models(opts)?, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subdiv_zero_gives_twelve_views_per_model() {
        let opts = GenerateOptions {
            categories: vec!["cup".into(), "bottle".into()],
            models_per_category: 2,
            subdiv: 0,
            image_size: 24,
            ..Default::default()
        };
        let (manifest, views) = generate_builtin(&opts).unwrap();
        assert_eq!(views.len(), 2 * 2 * 12);
        assert_eq!(manifest.category_count, 2);
        assert_eq!(manifest.category_id("bottle"), Some(2));
        for v in &views {
            assert_eq!(v.render.mask, v.render.depth.map(|&z| z > 0.0));
            let count = crate::geometry::mask_count(&v.render.mask);
            assert!(count > 20, "object too small in {}/{}", v.model, v.view);
        }
    }
}
