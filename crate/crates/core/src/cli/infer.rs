use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{parse_mode, RunConfig};
use super::{log, parse_list, require_exists, write_text, CliError, CliResult, Common};
use nocs_pose::denoiser::{parse_modalities, Modality};
use nocs_pose::features::read_feature_file;
use nocs_pose::geometry::{imageio, BoundingBox, Intrinsics, SimilarityTransform};
use nocs_pose::pipeline::{
    estimate, sample_hypotheses, EstimateOptions, InferenceRequest, NoiseBound, PoseModel, SampledNocs,
};
use nocs_pose::synthgen::dataset::{read_manifest, read_view, view_prefix};

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset directory, used with `--view`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Dataset view as `<category>/<model>/<index>`; supplies rgb, depth, mask and intrinsics.
    #[arg(long)]
    pub view: Option<String>,
    #[arg(long)]
    pub rgb: Option<PathBuf>,
    /// 16-bit depth PNG in millimeters.
    #[arg(long)]
    pub depth: Option<PathBuf>,
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// `fx,fy,cx,cy`; defaults to the dataset's or the square default for the image size.
    #[arg(long)]
    pub intrinsics: Option<String>,
    /// Square crop `cx,cy,side` in pixels; derived from the mask when absent.
    #[arg(long)]
    pub bbox: Option<String>,
    /// Category name known to the checkpoint.
    #[arg(long)]
    pub category: Option<String>,
    /// Enabled conditions, e.g. `normal,rgb,feat,category`.
    #[arg(long)]
    pub inputs: Option<String>,
    /// Raw dense features covering the full frame (NFEA file).
    #[arg(long)]
    pub features_file: Option<PathBuf>,
    /// Number of noise hypotheses.
    #[arg(long)]
    pub n_noises: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Denoising steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// `fast` or `ancestral`.
    #[arg(long)]
    pub mode: Option<String>,
    /// Registration noise bound as a fraction of the observed cloud diagonal.
    #[arg(long)]
    pub noise_bound_ratio: Option<f64>,
    /// Only sample NOCS maps; no depth needed and no pose is returned.
    #[arg(long)]
    pub no_register: bool,
    /// Output directory for `result.json` and NOCS PNGs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Pose in the result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub index: usize,
    pub confidence: f64,
    pub rotation_inlier_rate: f64,
    pub scale: f64,
    /// Metric size of the object: the bounding-box diagonal in scene units.
    pub object_size: f64,
    /// 4x4 similarity from centered NOCS to camera, row-major.
    pub transform: [f64; 16],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRecord {
    pub index: usize,
    pub seed: u64,
    pub nocs_png: String,
    pub pose: Option<PoseRecord>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub id: Option<String>,
    pub category: Option<String>,
    pub seed: u64,
    pub modalities: Vec<String>,
    pub null_modalities: Vec<String>,
    pub bbox: BoundingBox,
    pub noise_bound: Option<f64>,
    pub best: Option<PoseRecord>,
    pub hypotheses: Vec<HypothesisRecord>,
}

fn pose_record(p: &nocs_pose::registration::PoseHypothesis) -> PoseRecord {
    PoseRecord {
        index: p.index,
        confidence: p.confidence,
        rotation_inlier_rate: p.rotation_inlier_rate,
        scale: p.transform.scale,
        object_size: p.transform.scale,
        transform: p.transform.to_row_major(),
    }
}

/// Decompose a row-major 4x4 similarity (uniform scale) into a transform.
pub fn transform_from_row_major(m: &[f64; 16]) -> nocs_pose::Result<SimilarityTransform> {
    let sr = nalgebra::Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
    let det = sr.determinant();
    if !(det > 0.0 && det.is_finite()) {
        return Err(nocs_pose::Error::InvalidArgument("transform has non-positive determinant".into()));
    }
    let scale = det.cbrt();
    let mut rigid = [0.0; 16];
    for r in 0..3 {
        for c in 0..3 {
            rigid[r * 4 + c] = m[r * 4 + c] / scale;
        }
        rigid[r * 4 + 3] = m[r * 4 + 3];
    }
    rigid[15] = 1.0;
    let pose = nocs_pose::geometry::RigidPose::from_row_major(&rigid)?;
    SimilarityTransform::new(scale, pose)
}

struct Inputs {
    req: InferenceRequest,
    id: Option<String>,
    category: Option<String>,
}

fn load_inputs(a: &InferArgs, cfg: &RunConfig, model: &PoseModel) -> CliResult<Inputs> {
    let (mut req, id, mut category) = if let Some(view) = &a.view {
        let data = a
            .data
            .clone()
            .or(cfg.paths.data.clone())
            .ok_or_else(|| CliError::validation("--view needs --data"))?;
        let parts: Vec<&str> = view.split('/').collect();
        let [cat, mdl, idx] = parts[..] else {
            return Err(CliError::validation(format!("--view '{view}' is not <category>/<model>/<index>")));
        };
        let idx: usize = idx
            .parse()
            .map_err(|_| CliError::validation(format!("--view index '{idx}' is not a number")))?;
        let manifest = read_manifest(&data)?;
        let prefix = view_prefix(&data, cat, mdl, idx);
        let mut meta = prefix.clone().into_os_string();
        meta.push("_meta.json");
        require_exists(Path::new(&meta), "view")?;
        let v = read_view(&prefix)?;
        let mut req = InferenceRequest::from_render(&v.render, manifest.intrinsics);
        req.category = None;
        (req, Some(view.clone()), Some(v.category))
    } else {
        let mask_path = a.mask.as_ref().ok_or_else(|| CliError::validation("--mask is required without --view"))?;
        require_exists(mask_path, "mask")?;
        let mask = imageio::read_mask(mask_path)?;
        let intr = match &a.intrinsics {
            Some(s) => {
                let [fx, fy, cx, cy] = parse_list::<4>(s, "--intrinsics")?;
                Intrinsics::new(fx, fy, cx, cy, mask.width(), mask.height())?
            }
            None if mask.width() == mask.height() => Intrinsics::square_default(mask.width()),
            None => return Err(CliError::validation("--intrinsics is required for non-square images")),
        };
        let mut req = InferenceRequest::new(mask, intr);
        if let Some(p) = &a.rgb {
            require_exists(p, "rgb image")?;
            req.rgb = Some(imageio::read_rgb(p)?);
        }
        if let Some(p) = &a.depth {
            require_exists(p, "depth image")?;
            req.depth = Some(imageio::read_depth(p)?);
        }
        (req, None, None)
    };
    if let Some(c) = &a.category {
        category = Some(c.clone());
    }
    if let Some(name) = &category {
        req.category = Some(
            model
                .category_id(name)
                .ok_or_else(|| CliError::validation(format!("category '{name}' is unknown to the checkpoint")))?,
        );
    }
    if let Some(s) = &a.bbox {
        let [cx, cy, side] = parse_list::<3>(s, "--bbox")?;
        req.bbox = Some(BoundingBox::new(cx, cy, side)?);
    }
    if let Some(p) = &a.features_file {
        require_exists(p, "feature file")?;
        req.features = Some(read_feature_file(p)?);
    }
    match &a.inputs {
        Some(s) => req.modalities = parse_modalities(s)?,
        None => {
            // Default to every condition the inputs can supply.
            let (depth, rgb, feat) = (req.depth.is_some(), req.rgb.is_some(), req.rgb.is_some() || req.features.is_some());
            req.modalities.retain(|m| match m {
                Modality::Normal => depth,
                Modality::Rgb => rgb,
                Modality::Feat => feat,
                Modality::Category => true,
            });
        }
    }
    req.n_noises = a.n_noises.unwrap_or(cfg.infer.n_noises);
    req.seed = a.seed.unwrap_or(cfg.seed);
    Ok(Inputs { req, id, category })
}

fn write_maps(out: &Path, maps: &[SampledNocs]) -> CliResult<Vec<String>> {
    maps.iter()
        .map(|m| {
            let name = format!("nocs_{:02}.png", m.index);
            imageio::write_nocs(&out.join(&name), &m.full).map_err(|e| CliError::runtime(e.to_string()))?;
            Ok(name)
        })
        .collect()
}

pub fn run(a: InferArgs, mut cfg: RunConfig) -> CliResult<()> {
    if let Some(v) = a.steps {
        cfg.infer.sample_steps = v;
    }
    if let Some(v) = &a.mode {
        cfg.infer.mode = v.clone();
    }
    if let Some(v) = a.noise_bound_ratio {
        cfg.infer.noise_bound_ratio = v;
    }
    if let Some(v) = a.n_noises {
        cfg.infer.n_noises = v;
    }
    cfg.validate()?;
    let ckpt = a
        .checkpoint
        .clone()
        .or(cfg.paths.checkpoint.clone())
        .ok_or_else(|| CliError::validation("--checkpoint is required"))?;
    require_exists(&ckpt, "checkpoint")?;
    let out = a
        .out
        .clone()
        .or(cfg.paths.out.clone())
        .ok_or_else(|| CliError::validation("--out is required"))?;
    let model = PoseModel::load(&ckpt)?;
    let inputs = load_inputs(&a, &cfg, &model)?;
    let req = inputs.req;
    if !a.no_register && req.depth.is_none() {
        return Err(CliError::validation("registration needs --depth (or pass --no-register)"));
    }
    let opts = EstimateOptions {
        mode: parse_mode(&cfg.infer.mode)?,
        sample_steps: cfg.infer.sample_steps,
        noise_bound: NoiseBound::Relative(cfg.infer.noise_bound_ratio),
        robust: cfg.robust,
    };
    std::fs::create_dir_all(&out).map_err(|e| CliError::runtime(format!("{}: {e}", out.display())))?;

    let (maps, poses, best, bbox, modalities, noise_bound) = if a.no_register {
        let (maps, bbox, modalities) = sample_hypotheses(&req, &model, &opts)?;
        let n = maps.len();
        (maps, vec![(None, None); n], None, bbox, modalities, None)
    } else {
        let res = estimate(&req, &model, &opts)?;
        let poses = res.hypotheses.iter().map(|h| (h.pose.as_ref().map(pose_record), h.failure.clone())).collect();
        let maps = res.hypotheses.into_iter().map(|h| h.sampled).collect();
        (maps, poses, Some(pose_record(&res.best)), res.bbox, res.modalities, Some(res.noise_bound))
    };
    let names = write_maps(&out, &maps)?;
    let hypotheses = maps
        .iter()
        .zip(names)
        .zip(poses)
        .map(|((m, name), (pose, failure))| HypothesisRecord {
            index: m.index,
            seed: m.seed,
            nocs_png: name,
            pose,
            failure,
        })
        .collect();
    let result = ResultFile {
        id: inputs.id,
        category: inputs.category,
        seed: req.seed,
        modalities: modalities.iter().map(|m| m.name().to_string()).collect(),
        null_modalities: Modality::ALL
            .iter()
            .filter(|m| !modalities.contains(m))
            .map(|m| m.name().to_string())
            .collect(),
        bbox,
        noise_bound,
        best,
        hypotheses,
    };
    let text = serde_json::to_string_pretty(&result).map_err(|e| CliError::runtime(e.to_string()))? + "\n";
    let path = out.join("result.json");
    write_text(&path, &text)?;
    log::emit(
        "infer",
        json!({
            "result": path.display().to_string(),
            "hypotheses": result.hypotheses.len(),
            "confidence": result.best.as_ref().map(|b| b.confidence),
        }),
    );
    Ok(())
}
