use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use esncast_core::market_data::Horizon;
use esncast_core::pipeline::{self, ModelKind, Overrides, RunConfig};
use esncast_core::{Error, Result};

/// Multi-horizon intraday return forecasting with echo state networks.
#[derive(Parser)]
#[command(name = "esncast", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Comma-separated horizons, e.g. `10min,EOD`.
    #[arg(long, global = true, value_delimiter = ',')]
    horizons: Option<Vec<String>>,

    /// Comma-separated models: baseline, benchmark, esn.
    #[arg(long, global = true, value_delimiter = ',')]
    models: Option<Vec<String>>,

    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate a synthetic return panel.
    Simulate,
    /// Ingest intraday bars into a return panel.
    Ingest,
    /// Build mean-reversion signals.
    Signals,
    /// Run the walk-forward backtest for every model and horizon.
    Backtest,
    /// Compute MSFE, R², Diebold-Mariano and model confidence set results.
    Evaluate,
    /// Random search over reservoir hyperparameters on the pre-sample.
    Tune,
    /// Render summary tables and optional robustness bands.
    Report,
}

fn parse_all<T: std::str::FromStr<Err = Error>>(xs: Option<Vec<String>>) -> Result<Option<Vec<T>>> {
    xs.map(|v| v.iter().map(|s| s.parse()).collect()).transpose()
}

fn run(cli: Cli) -> Result<()> {
    let path = cli.config.ok_or_else(|| Error::Config("--config is required".into()))?;
    let overrides = Overrides {
        seed: cli.seed,
        output_dir: cli.out,
        horizons: parse_all::<Horizon>(cli.horizons)?,
        models: parse_all::<ModelKind>(cli.models)?,
        jobs: cli.jobs,
    };
    let cfg = RunConfig::load(&path, std::env::vars(), &overrides)?;
    if let Some(j) = cfg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?;
    }
    let manifest = match cli.command {
        Command::Simulate => pipeline::cmd_simulate(&cfg)?,
        Command::Ingest => pipeline::cmd_ingest(&cfg)?,
        Command::Signals => pipeline::cmd_signals(&cfg)?,
        Command::Backtest => pipeline::cmd_backtest(&cfg)?,
        Command::Evaluate => pipeline::cmd_evaluate(&cfg)?.0,
        Command::Tune => pipeline::cmd_tune(&cfg)?,
        Command::Report => pipeline::cmd_report(&cfg)?,
    };
    for o in &manifest.outputs {
        println!("{}", cfg.output_dir.join(&o.path).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
