//! `impactlab`: simulate metaorder panels, estimate impact and variance
//! curves, fit model parameters, evaluate execution cost, and assemble a
//! reproduction bundle.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data/schema error,
//! 3 numeric error (non-convergence, quadrature failure, insufficient
//! data).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use impact_core::{Error, ImpactModel, MarketParams};

use commands::Paths;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "impactlab", version, about)]
struct Cli {
    /// JSON run configuration; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// RNG seed for the panel.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (falls back to IMPACTLAB_THREADS, then to machine
    /// parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic metaorder panel as a fills CSV.
    Simulate {
        #[arg(long)]
        n_orders: Option<u64>,
        /// Fills output path (default <out>/fills.csv).
        #[arg(long)]
        fills: Option<PathBuf>,
    },
    /// Bucket fills into impact/variance curves plus diagnostics.
    Estimate {
        #[arg(long)]
        fills: Option<PathBuf>,
        #[arg(long)]
        curves: Option<PathBuf>,
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        #[arg(long)]
        n_bins: Option<usize>,
        #[arg(long)]
        n_min: Option<u64>,
    },
    /// Fit (Y, phi0, a) from curves (or raw fills).
    Fit {
        #[arg(long)]
        curves: Option<PathBuf>,
        #[arg(long)]
        fills: Option<PathBuf>,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Expected cost and execution risk for a schedule JSON.
    Cost {
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        daily_volume: Option<f64>,
        #[arg(long)]
        y_const: Option<f64>,
        #[arg(long)]
        phi0: Option<f64>,
        #[arg(long)]
        a_fluct: Option<f64>,
    },
    /// Assemble the reproduction bundle from completed outputs.
    Report {},
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.sim.seed = config.seed;
    config.validate()?;
    Ok(config)
}

fn resolve_threads(cli: &Cli) -> Option<usize> {
    cli.threads.or_else(|| {
        std::env::var("IMPACTLAB_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(n) = resolve_threads(&cli) {
        if n == 0 {
            return Err(Error::Domain("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    }

    let mut config = resolve_config(&cli)?;
    let paths = Paths::new(cli.out.clone());

    match cli.command {
        Command::Simulate { n_orders, fills } => {
            if let Some(n) = n_orders {
                config.sim.n_orders = n;
            }
            commands::cmd_simulate(&config, &paths, fills)
        }
        Command::Estimate { fills, curves, diagnostics, n_bins, n_min } => {
            if let Some(n) = n_bins {
                config.grid.n_bins = n;
            }
            if let Some(n) = n_min {
                config.grid.n_min = n;
            }
            commands::cmd_estimate(&config, &paths, fills, curves, diagnostics)
        }
        Command::Fit { curves, fills, summary } => {
            commands::cmd_fit(&config, &paths, curves, fills, summary)
        }
        Command::Cost { schedule, report, sigma, daily_volume, y_const, phi0, a_fluct } => {
            let market = MarketParams::new(
                sigma.unwrap_or(config.sim.market.sigma),
                daily_volume.unwrap_or(config.sim.market.daily_volume),
            )?;
            let model = ImpactModel::new(
                y_const.unwrap_or(config.sim.model.y_const),
                phi0.unwrap_or(config.sim.model.phi0),
                a_fluct.unwrap_or(config.sim.model.a_fluct),
            )?;
            commands::cmd_cost(&config, &paths, &schedule, report, market, model)
        }
        Command::Report {} => commands::cmd_report(&config, &paths),
    }
}

fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::Domain(_) => 1,
        Error::Schema(_) | Error::Row { .. } | Error::GridMismatch(_) | Error::Io(_)
        | Error::Csv(_) => 2,
        Error::InsufficientData(_) | Error::Quadrature { .. } | Error::NonConvergence { .. } => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
