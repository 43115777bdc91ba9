//! `spectral-splat`: analysis, rendering, training and zoom benchmarks for
//! Gaussian-splat scenes.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spectral_splat::synth::SceneKind;
use spectral_splat::train::{TrainError, Variant};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "spectral-splat",
    version,
    about = "Spectral analysis workbench for Gaussian splatting"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for synthetic scenes, initialization and training; falls back to
    /// `train.seed` from the config file, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Single-threaded rendering and training; results are bit-reproducible.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// TOML or JSON file with [filter], [train], [densify] and [render] sections.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Training log destination (JSON lines); defaults to stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub log_file: Option<PathBuf>,
}

/// Where the scene comes from: a PLY file or a seeded synthetic generator.
#[derive(Debug, Clone, Args)]
pub struct SceneArgs {
    /// Binary little-endian PLY scene.
    #[arg(value_name = "PLY", required_unless_present = "synth", conflicts_with = "synth")]
    pub ply: Option<PathBuf>,
    /// Generate a synthetic scene instead of loading one.
    #[arg(long, value_parser = parse_kind)]
    pub synth: Option<SceneKind>,
    /// Gaussians in the synthetic scene.
    #[arg(long, default_value_t = 200)]
    pub count: usize,
}

/// Camera source: a JSON camera file or the synthetic ring (8 training plus 3
/// held-out views around the origin).
#[derive(Debug, Clone, Args)]
pub struct CameraArgs {
    #[arg(long, value_name = "PATH")]
    pub cameras: Option<PathBuf>,
    /// Image width and height of the synthetic ring cameras.
    #[arg(long, default_value_t = 256)]
    pub size: u32,
    /// Cameras the scene was fitted with. They set each Gaussian's maximal
    /// sampling rate, which the view-consistent filter scales against.
    /// Synthetic scenes default to the ring's training views.
    #[arg(long, value_name = "PATH")]
    pub train_cameras: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-Gaussian radius, condition number and spectral entropy.
    Analyze {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
        format: ReportFormat,
        /// Output file; stdout when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Entropy below which a Gaussian counts as a needle.
        #[arg(long, default_value_t = 0.5)]
        needle_threshold: f64,
    },
    /// One PNG per camera plus render_stats.json.
    Render {
        #[command(flatten)]
        scene: SceneArgs,
        #[command(flatten)]
        cameras: CameraArgs,
        /// none, ewa, mip or view-consistent.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
    /// Fit a scene to posed images (or to renders of a synthetic scene).
    Train {
        /// Synthetic ground truth rendered through the ring cameras.
        #[arg(long, value_parser = parse_kind, required_unless_present = "cameras")]
        synth: Option<SceneKind>,
        /// Gaussians in the synthetic ground truth and in the random init.
        #[arg(long, default_value_t = 200)]
        count: usize,
        /// Camera file whose entries carry `image_path`.
        #[arg(long, value_name = "PATH", conflicts_with = "synth")]
        cameras: Option<PathBuf>,
        #[arg(long, default_value_t = 256)]
        size: u32,
        /// Start from this PLY instead of a random init.
        #[arg(long, value_name = "PLY")]
        init: Option<PathBuf>,
        #[arg(long, value_parser = parse_variant, default_value = "spectral")]
        variant: Variant,
        /// Overrides the variant's screen-space filter.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long, short, value_name = "PLY")]
        out: PathBuf,
    },
    /// Filtered condition number across focal multipliers, with analytic overlay.
    ZoomBench {
        #[command(flatten)]
        scene: SceneArgs,
        #[command(flatten)]
        cameras: CameraArgs,
        /// Index into the camera list used as the base view.
        #[arg(long, default_value_t = 0)]
        view: usize,
        /// Filter modes to compare.
        #[arg(long = "filter", value_delimiter = ',', default_value = "ewa,mip,view-consistent")]
        filters: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        multipliers: Vec<f64>,
        /// Ground-truth scene for PSNR; synthetic scenes are their own reference.
        #[arg(long, value_name = "PLY")]
        reference: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
    /// Per-pixel blended spectral entropy, blue (low) to green (high).
    EntropyMap {
        #[command(flatten)]
        scene: SceneArgs,
        #[command(flatten)]
        cameras: CameraArgs,
        #[arg(long, default_value_t = 0)]
        view: usize,
        #[arg(long)]
        filter: Option<String>,
        /// Colorbar height in pixels under the map; 0 disables it.
        #[arg(long, default_value_t = 12)]
        colorbar: u32,
        #[arg(long, short, value_name = "PNG")]
        out: PathBuf,
    },
}

fn parse_kind(s: &str) -> Result<SceneKind, String> {
    s.parse()
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse::<Variant>().map_err(|e| e.to_string())
}

/// Bad arguments that clap cannot see (missing camera, bad filter name, ...).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// A numerical property the command asserts did not hold.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct CheckFailed(pub String);

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<spectral_splat::filters::FilterError>() {
            return EXIT_USAGE;
        }
        if cause.is::<CheckFailed>()
            || matches!(
                cause.downcast_ref::<TrainError>(),
                Some(TrainError::NumericalFailure(_))
            )
        {
            return EXIT_NUMERICAL;
        }
        if let Some(spectral_splat::render::RenderError::SingularCovariance(_)) = cause.downcast_ref() {
            return EXIT_NUMERICAL;
        }
    }
    EXIT_DATA
}

fn init_threads() -> anyhow::Result<()> {
    #[cfg(feature = "parallel")]
    if let Ok(v) = std::env::var("SPECTRAL_SPLAT_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| UsageError(format!("SPECTRAL_SPLAT_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match init_threads().and_then(|()| commands::run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
