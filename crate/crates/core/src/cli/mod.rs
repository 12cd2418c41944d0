//! Command-line surface: dataset generation, training, inference, evaluation
//! and rotation plots, configured by an optional TOML file plus flags.

mod config;
mod eval;
mod gen;
mod infer;
mod log;
mod plot;
mod train;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

/// Exit status for invalid input or configuration.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status for failures while doing the work.
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl From<nocs_pose::Error> for CliError {
    fn from(e: nocs_pose::Error) -> Self {
        use nocs_pose::Error as E;
        match e {
            E::InvalidArgument(_) | E::ShapeMismatch(_) => Self::validation(e.to_string()),
            _ => Self::runtime(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "nocs-pose", version, about = "Category-level object pose from diffusion-sampled NOCS maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset from built-in or OBJ shapes.
    GenData(gen::GenArgs),
    /// Train the denoiser on a dataset and write a checkpoint.
    Train(train::TrainArgs),
    /// Estimate the pose of one object.
    Infer(infer::InferArgs),
    /// Precision table of predictions against ground truth.
    Eval(eval::EvalArgs),
    /// SVG of hypothesis rotations applied to a probe axis.
    PlotRotations(plot::PlotArgs),
}

fn setup(common: &Common) -> CliResult<RunConfig> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::runtime(format!("thread pool: {e}")))?;
    }
    if let Some(p) = &common.config {
        if !p.is_file() {
            return Err(CliError::validation(format!("config file {} not found", p.display())));
        }
    }
    let cfg = RunConfig::load(common.config.as_deref()).map_err(|e| CliError::validation(e.to_string()))?;
    Ok(cfg)
}

/// Run a parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenData(a) => {
            let cfg = setup(&a.common)?;
            gen::run(a, cfg)
        }
        Command::Train(a) => {
            let cfg = setup(&a.common)?;
            train::run(a, cfg)
        }
        Command::Infer(a) => {
            let cfg = setup(&a.common)?;
            infer::run(a, cfg)
        }
        Command::Eval(a) => {
            let cfg = setup(&a.common)?;
            eval::run(a, cfg)
        }
        Command::PlotRotations(a) => {
            let cfg = setup(&a.common)?;
            plot::run(a, cfg)
        }
    }
}

/// Report a failed command as a log record.
pub fn log_error(e: &CliError) {
    log::emit("error", serde_json::json!({ "code": e.code, "message": e.message }));
}

/// Fail with a validation error unless `path` exists.
fn require_exists(path: &std::path::Path, what: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::validation(format!("{what} {} does not exist", path.display())))
    }
}

fn parse_list<const N: usize>(s: &str, what: &str) -> CliResult<[f64; N]> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| CliError::validation(format!("{what} must be {N} comma-separated numbers, got '{s}'")))?;
    vals.try_into()
        .map_err(|_| CliError::validation(format!("{what} must be {N} comma-separated numbers, got '{s}'")))
}

fn write_text(path: &std::path::Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}
