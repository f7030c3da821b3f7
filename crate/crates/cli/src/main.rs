//! `camsmooth`: batch runs of scene generation, rendering, training,
//! certification and evaluation.
//!
//! Exit status 0 on success, 2 when the config or an input it names is
//! invalid, 1 on any other failure. `CMS_LOG` sets the log level.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use camsmooth::motion::MotionAxis;
use clap::{Args, Parser, Subcommand};

use config::{Needs, Overrides, RunConfig};

/// Why a run stopped.
#[derive(Debug)]
pub enum Failure {
    /// Config or manifest content violates its schema, or names a missing input.
    Schema(String),
    Runtime(String),
}

impl From<camsmooth::Error> for Failure {
    fn from(e: camsmooth::Error) -> Self {
        match e {
            camsmooth::Error::Schema(msg) => Failure::Schema(msg),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "camsmooth", version, about = "Camera-motion smoothing and certification for point-cloud views")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the labeled desk scenes: one PLY per class plus a manifest.
    GenScene(RunArgs),
    /// Render test views under motions along the configured axis.
    Render(RunArgs),
    /// Fit and save the nearest-centroid model.
    Train(RunArgs),
    /// Write per-view certificates as JSON.
    Certify(RunArgs),
    /// Attack, smooth and certify every test view; write CSV metrics.
    Evaluate(RunArgs),
    /// Print the summary table of the last evaluation.
    Report(RunArgs),
    /// Answer image requests on stdin with a saved model.
    #[command(hide = true)]
    ServeClassifier {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Motion axis: tx, ty, tz, rx, ry or rz.
    #[arg(long)]
    axis: Option<MotionAxis>,
    /// Attack radius on the axis, in meters or radians.
    #[arg(long)]
    radius: Option<f64>,
    /// Smoothing sigma on the axis, in meters or radians.
    #[arg(long)]
    sigma: Option<f64>,
    /// Estimation samples.
    #[arg(long)]
    n: Option<u64>,
    /// Selection samples.
    #[arg(long)]
    n0: Option<u64>,
    /// Failure probability of the certificate.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            axis: self.axis,
            radius: self.radius,
            sigma: self.sigma,
            n: self.n,
            n0: self.n0,
            alpha: self.alpha,
            seed: self.seed,
            workers: self.workers,
            out: self.out.clone(),
        }
    }

    fn resolve(&self, needs: Needs) -> Result<RunConfig, Failure> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let config = base.resolve(&self.overrides());
        config.validate(needs)?;
        Ok(config)
    }
}

type Body = fn(commands::Run) -> Result<(), Failure>;

fn run(cli: Cli) -> Result<(), Failure> {
    let (name, args, needs, body): (&'static str, RunArgs, Needs, Body) = match cli.command {
        Command::ServeClassifier { model } => return commands::serve_classifier(&model),
        Command::GenScene(a) => ("gen-scene", a, NEEDS_NOTHING, commands::gen_scene),
        Command::Render(a) => ("render", a, NEEDS_SCENES, commands::render_views),
        Command::Train(a) => ("train", a, NEEDS_SCENES, commands::train_model),
        Command::Certify(a) => ("certify", a, NEEDS_CERTIFY, commands::certify),
        Command::Evaluate(a) => ("evaluate", a, NEEDS_CLASSIFIER, commands::evaluate),
        Command::Report(a) => ("report", a, NEEDS_NOTHING, commands::report),
    };
    let config = args.resolve(needs)?;
    if let Some(workers) = config.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Failure::Runtime(format!("cannot start {workers} workers: {e}")))?;
    }
    log::info!("{name}: output directory {}", config.out_dir.display());
    body(commands::Run { command: name, config })
}

const NEEDS_NOTHING: Needs = Needs { manifest: false, classifier: false, positive_sigma: false };
const NEEDS_SCENES: Needs = Needs { manifest: true, classifier: false, positive_sigma: false };
const NEEDS_CLASSIFIER: Needs = Needs { manifest: true, classifier: true, positive_sigma: false };
const NEEDS_CERTIFY: Needs = Needs { manifest: true, classifier: true, positive_sigma: true };

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CMS_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Schema(msg)) => {
            eprintln!("camsmooth: invalid configuration: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("camsmooth: {msg}");
            ExitCode::from(1)
        }
    }
}
