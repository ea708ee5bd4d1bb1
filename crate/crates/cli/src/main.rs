//! `floodrisk` command-line interface.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use floodrisk_core::{Layer, Task};

use crate::config::{Overrides, RunConfig};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration: exit code 2.
    Usage(String),
    Core(floodrisk_core::Error),
    /// Non-converged fits under `--strict`.
    NotConverged(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_config() => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::NotConverged(models) => write!(f, "fits did not converge: {}", models.join(", ")),
        }
    }
}

impl From<floodrisk_core::Error> for CliError {
    fn from(e: floodrisk_core::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Parser)]
#[command(name = "floodrisk", version, about = "Building-level flood claim occurrence and severity modelling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    features_dir: Option<PathBuf>,
    #[arg(long)]
    folds: Option<usize>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long)]
    task: Task,
    #[arg(long, conflicts_with = "all_layers")]
    layer: Option<Layer>,
    /// Fit ins, ins+c, ins+r and all on shared folds.
    #[arg(long)]
    all_layers: bool,
    /// Exit with code 1 when a fit does not converge.
    #[arg(long)]
    strict: bool,
}

impl ModelArgs {
    fn layers(&self, default: Layer) -> Vec<Layer> {
        if self.all_layers {
            Layer::ALL.to_vec()
        } else {
            vec![self.layer.unwrap_or(default)]
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario into the data directory.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Scenario preset: ci, desk_max or small.
        #[arg(long)]
        profile: Option<String>,
    },
    /// Validate the input tables.
    Ingest {
        #[command(flatten)]
        common: Common,
    },
    /// Compute rainfall indicators, tail scores and geo features.
    Features {
        #[command(flatten)]
        common: Common,
        /// Skip geo features (the `all` layer then becomes unavailable).
        #[arg(long)]
        no_geo: bool,
    },
    /// Cross-validate and refit one layer or all layers.
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// All layers for one or both tasks.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        task: Option<Task>,
        #[arg(long)]
        strict: bool,
    },
    /// Likelihood-ratio drop-one ranking of a layer's terms.
    Importance {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Residual map and grouped observed-vs-predicted tables from out-of-fold predictions.
    Residuals {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Evaluation, importance and residuals for both tasks plus an artifact manifest.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strict: bool,
    },
}

fn setup(common: &Common, profile: Option<String>, no_geo: bool) -> Result<RunConfig, CliError> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let overrides = Overrides {
        seed: common.seed,
        data_dir: common.data_dir.clone(),
        output_dir: common.output_dir.clone(),
        features_dir: common.features_dir.clone(),
        folds: common.folds,
        profile,
        no_geo,
    };
    RunConfig::load(common.config.as_deref(), &overrides)
}

fn run(cli: Cli) -> Result<commands::Summary, CliError> {
    match cli.command {
        Command::Simulate { common, profile } => commands::simulate(&setup(&common, profile, false)?),
        Command::Ingest { common } => commands::ingest(&setup(&common, None, false)?),
        Command::Features { common, no_geo } => commands::features(&setup(&common, None, no_geo)?),
        Command::Fit { common, model } => commands::fit(&setup(&common, None, false)?, model.task, &model.layers(Layer::Ins), model.strict),
        Command::Evaluate { common, task, strict } => commands::evaluate(&setup(&common, None, false)?, task, strict),
        Command::Importance { common, model } => commands::importance(&setup(&common, None, false)?, model.task, &model.layers(Layer::All)),
        Command::Residuals { common, model } => commands::residuals(&setup(&common, None, false)?, model.task, &model.layers(Layer::All)),
        Command::Report { common, strict } => commands::report(&setup(&common, None, false)?, strict),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(summary) => {
            summary.print();
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
