use std::path::PathBuf;
use std::process::ExitCode;

use burgers_harnack::config::{parse_config, RunConfig};
use burgers_harnack::error::ExperimentError;
use burgers_harnack::experiments::EXPERIMENTS;
use burgers_harnack::runner::{dispatch, with_threads, RunError};
use clap::Parser;

/// Monte-Carlo checks of Harnack-type estimates for the stochastic Burgers
/// semigroup.
#[derive(Debug, Parser)]
#[command(name = "burgers-harnack", version, after_help = experiment_help())]
struct Cli {
    /// Experiment to run, or `all`.
    experiment: String,

    /// JSON configuration; omitted keys take their defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory for CSV files and manifest.json.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Master seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N", env = "BURGERS_HARNACK_THREADS")]
    threads: Option<usize>,

    /// Sample count for every experiment.
    #[arg(long, value_name = "N")]
    samples: Option<usize>,

    /// Time step.
    #[arg(long, value_name = "F")]
    dt: Option<f64>,

    /// Only print errors.
    #[arg(long)]
    quiet: bool,
}

fn experiment_help() -> String {
    format!("Experiments: {}, all", EXPERIMENTS.join(", "))
}

fn resolve(cli: &Cli) -> Result<RunConfig, RunError> {
    let mut cfg = match &cli.config {
        Some(p) => parse_config(p).map_err(ExperimentError::from)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.samples {
        cfg.samples = Some(n);
    }
    if let Some(dt) = cli.dt {
        cfg.dt = dt;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = resolve(&cli).and_then(|cfg| {
        with_threads(cli.threads, || dispatch(&cli.experiment, &cfg, &cli.out, cli.config.as_deref()))
    });
    let status = match result {
        Ok(outcome) => {
            if !cli.quiet {
                for o in &outcome.manifest.outputs {
                    println!(
                        "{:<15} {:>6} rows {:>4} failed  {}",
                        o.experiment,
                        o.rows,
                        o.failed,
                        cli.out.join(&o.file).display()
                    );
                }
            }
            outcome.status()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.status()
        }
    };
    ExitCode::from(status.code() as u8)
}
