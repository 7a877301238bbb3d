mod config;
mod manifest;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use landuse_core::Error;

use crate::config::Config;

/// Infer land use on a square grid from time-stamped point activity.
#[derive(Debug, Parser)]
#[command(name = "landuse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file with flat `section.key = value` entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Master seed; overrides `seed` from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0, global = true)]
    threads: usize,

    /// Log progress at debug level.
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Zoning polygons to a labeled grid.
    Rasterize,
    /// Event CSV to an hour-of-week activity cube.
    Ingest,
    /// Cube and zoning grid to the 49-feature matrix and class profiles.
    Features,
    /// Cross-validate, tune class weights and fit the final forest.
    Train,
    /// Apply the trained forest to the feature matrix.
    Predict,
    /// Neighbour-majority smoothing of raw predictions.
    Smooth,
    /// Confusion reports and error-group profiles.
    Evaluate,
    /// Generate a synthetic city: zoning polygons, ground truth and events.
    Synth,
    /// Run rasterize through evaluate in order.
    Pipeline,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::MissingInput(_) => 2,
        Error::Config(_) => 3,
        Error::Consistency(_) | Error::Parse(_) | Error::InvalidPolygon { .. } => 4,
        Error::Io { .. } | Error::Argument(_) => 1,
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(path) = &cli.config {
        if !path.is_file() {
            return Err(Error::MissingInput(path.clone()));
        }
    }
    let cfg = Config::load(cli.config.as_deref(), &overrides)?;
    let stage = match cli.command {
        Command::Rasterize => stages::rasterize,
        Command::Ingest => stages::ingest,
        Command::Features => stages::features,
        Command::Train => stages::train,
        Command::Predict => stages::predict,
        Command::Smooth => stages::smooth_stage,
        Command::Evaluate => stages::evaluate,
        Command::Synth => stages::synth,
        Command::Pipeline => stages::pipeline,
    };
    stage(&cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        log::error!("cannot start thread pool: {e}");
        return ExitCode::from(1);
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
