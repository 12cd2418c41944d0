use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::json;

use super::config::RunConfig;
use super::{log, require_exists, CliError, CliResult, Common};
use nocs_pose::synthgen::{builtin_models, generate, shapes, write_dataset, GenerateOptions, SourceModel};

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: Common,
    /// `builtin` or a directory holding `<category>/<model>.obj`.
    #[arg(long)]
    pub shapes: Option<String>,
    /// Comma-separated category names.
    #[arg(long)]
    pub categories: Option<String>,
    /// Built-in models per category.
    #[arg(long)]
    pub models: Option<usize>,
    /// Icosphere subdivision level of the camera rig (0 → 12 views, 2 → 162).
    #[arg(long)]
    pub subdiv: Option<u32>,
    /// Rendered image side in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    /// Orbit radius in object diagonals.
    #[arg(long)]
    pub radius_factor: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

const OBJ_COLOR: [f32; 3] = [0.7, 0.7, 0.7];

fn obj_models(dir: &Path, categories: &[String]) -> CliResult<Vec<SourceModel>> {
    let mut out = Vec::new();
    for cat in categories {
        let cdir = dir.join(cat);
        require_exists(&cdir, "category directory")?;
        let mut files: Vec<PathBuf> = std::fs::read_dir(&cdir)
            .map_err(|e| CliError::validation(format!("{}: {e}", cdir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("obj")))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(CliError::validation(format!("no .obj files in {}", cdir.display())));
        }
        for f in files {
            let name = f.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
            out.push(SourceModel {
                category: cat.clone(),
                name,
                mesh: shapes::load_obj(&f, OBJ_COLOR)?,
                symmetric: false,
            });
        }
    }
    Ok(out)
}

pub fn run(a: GenArgs, mut cfg: RunConfig) -> CliResult<()> {
    let d = &mut cfg.data;
    if let Some(v) = a.shapes {
        d.shapes = v;
    }
    if let Some(v) = a.categories {
        d.categories = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    }
    if let Some(v) = a.models {
        d.models_per_category = v;
    }
    if let Some(v) = a.subdiv {
        d.subdiv = v;
    }
    if let Some(v) = a.size {
        d.size = v;
    }
    if let Some(v) = a.radius_factor {
        d.radius_factor = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let out = a
        .out
        .or(cfg.paths.out.clone())
        .ok_or_else(|| CliError::validation("--out is required"))?;
    cfg.validate()?;
    let d = &cfg.data;
    let opts = GenerateOptions {
        categories: d.categories.clone(),
        models_per_category: d.models_per_category,
        subdiv: d.subdiv,
        image_size: d.size,
        radius_factor: d.radius_factor,
        seed: cfg.seed,
    };
    let models = if d.shapes == "builtin" {
        builtin_models(&opts)?
    } else {
        let dir = PathBuf::from(&d.shapes);
        require_exists(&dir, "shape directory")?;
        obj_models(&dir, &d.categories)?
    };
    let (manifest, views) = generate(&models, &opts)?;
    std::fs::create_dir_all(&out).map_err(|e| CliError::runtime(format!("{}: {e}", out.display())))?;
    write_dataset(&out, &manifest, &views).map_err(|e| CliError::runtime(e.to_string()))?;
    log::emit(
        "gen-data",
        json!({
            "out": out.display().to_string(),
            "models": models.len(),
            "views": manifest.view_count,
            "seed": manifest.seed,
        }),
    );
    Ok(())
}
