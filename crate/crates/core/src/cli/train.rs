use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use super::config::RunConfig;
use super::{log, require_exists, CliError, CliResult, Common};
use nocs_pose::denoiser::{train, NoiseSchedule, UNetParams};
use nocs_pose::pipeline::{batch_sampler, build_training_set, PoseModel};
use nocs_pose::synthgen::{read_dataset, RenderOutput};

/// Steps between loss records in the training log.
const LOG_EVERY: usize = 100;

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset directory written by `gen-data`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Checkpoint path; the PCA basis is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Probability of dropping each condition per sample.
    #[arg(long)]
    pub drop_rate: Option<f64>,
    /// Network input side in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Disable in-plane rotation and relighting.
    #[arg(long)]
    pub no_augment: bool,
    /// Training log (NDJSON); defaults to `<out>.log.ndjson`.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

pub fn run(a: TrainArgs, mut cfg: RunConfig) -> CliResult<()> {
    let t = &mut cfg.train;
    if let Some(v) = a.steps {
        t.steps = v;
    }
    if let Some(v) = a.drop_rate {
        t.drop_rate = v;
    }
    if let Some(v) = a.size {
        t.image_size = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.lr {
        t.learning_rate = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    t.seed = cfg.seed;
    if a.no_augment {
        cfg.augment.enabled = false;
    }
    let data = a
        .data
        .or(cfg.paths.data.clone())
        .ok_or_else(|| CliError::validation("--data is required"))?;
    let out = a
        .out
        .or(cfg.paths.checkpoint.clone())
        .ok_or_else(|| CliError::validation("--out is required"))?;
    cfg.validate()?;
    require_exists(&data.join("manifest.json"), "dataset manifest")?;
    let log_path = a.log.unwrap_or_else(|| {
        let mut s = out.clone().into_os_string();
        s.push(".log.ndjson");
        PathBuf::from(s)
    });

    let dataset = read_dataset(&data)?;
    let mut model_cfg = cfg.model.clone();
    model_cfg.image_size = cfg.train.image_size;
    model_cfg.categories = dataset.manifest.category_count.max(1);
    let views: Vec<&RenderOutput> = dataset.views.iter().map(|v| &v.render).collect();
    let set = build_training_set(&views, dataset.manifest.intrinsics, model_cfg.image_size, model_cfg.feat_channels)?;
    let schedule = NoiseSchedule::from_config(&cfg.schedule)?;
    let mut params = UNetParams::<f32>::init(&model_cfg, cfg.seed)?;
    log::emit(
        "train-start",
        json!({
            "views": set.samples.len(),
            "parameters": params.parameter_count(),
            "steps": cfg.train.steps,
        }),
    );

    if let Some(dir) = log_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    }
    let mut log_file = std::fs::File::create(&log_path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", log_path.display())))?;
    let mut window = 0.0;
    let mut count = 0usize;
    let mut write_err = None;
    let total = cfg.train.steps;
    let outcome = train(
        &mut params,
        &schedule,
        &cfg.train,
        batch_sampler(&set.samples, cfg.augment.params()),
        |e, _| {
            window += e.loss;
            count += 1;
            if e.step % LOG_EVERY == 0 || e.step == total {
                let rec = json!({ "step": e.step, "loss": window / count as f64, "learning_rate": e.learning_rate });
                if let Err(err) = writeln!(log_file, "{rec}") {
                    write_err.get_or_insert(err);
                }
                window = 0.0;
                count = 0;
            }
        },
    );
    if let Some(err) = write_err {
        return Err(CliError::runtime(format!("{}: {err}", log_path.display())));
    }

    let names = dataset.manifest.categories.iter().map(|c| c.name.clone()).collect();
    let model = PoseModel::new(params, schedule, set.pca, names)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    }
    model.save(&out).map_err(|e| CliError::runtime(e.to_string()))?;
    match outcome {
        Ok(()) => {
            log::emit("train-done", json!({ "checkpoint": out.display().to_string(), "log": log_path.display().to_string() }));
            Ok(())
        }
        Err(e) => Err(CliError::runtime(format!("{e}; last good parameters saved to {}", out.display()))),
    }
}
