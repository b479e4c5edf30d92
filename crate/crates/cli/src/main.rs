mod commands;
mod config;
mod output;
mod reproduce;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::ConfigError;

/// POCRM dose-combination design toolkit.
#[derive(Parser)]
#[command(name = "pocrm", version)]
struct Cli {
    /// worker threads for simulation and consistency checks
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Complete orderings and ordering selection
    #[command(subcommand)]
    Orders(OrdersCmd),
    /// Consistency conditions
    #[command(subcommand)]
    Consistency(ConsistencyCmd),
    /// Skeleton calibration
    #[command(subcommand)]
    Skeleton(SkeletonCmd),
    /// Monte Carlo operating characteristics
    #[command(subcommand)]
    Simulate(SimulateCmd),
    /// Nonparametric partial-ordering benchmark PCS
    Benchmark(Common),
    /// Regenerate a table or figure of the reference study
    Reproduce(ReproduceArgs),
}

#[derive(Subcommand)]
enum OrdersCmd {
    /// List every complete ordering of a grid
    Enumerate {
        #[arg(long, default_value_t = 3)]
        rows: usize,
        #[arg(long, default_value_t = 3)]
        cols: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Choose orderings by set cover
    Select {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Mode::Agnostic)]
        mode: Mode,
        #[arg(long)]
        budget: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Mode {
    Agnostic,
    Specific,
}

#[derive(Subcommand)]
enum ConsistencyCmd {
    /// Check the sufficient consistency conditions per scenario
    Check {
        #[command(flatten)]
        common: Common,
        /// exit with status 1 when any scenario is inconsistent
        #[arg(long)]
        assert: bool,
    },
}

#[derive(Subcommand)]
enum SkeletonCmd {
    /// Search for a skeleton consistent under every configured scenario
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        max_iter: Option<usize>,
        /// grid on which moved skeleton entries are placed
        #[arg(long)]
        step: Option<f64>,
    },
}

#[derive(Subcommand)]
enum SimulateCmd {
    /// PCS at one sample size
    Pcs(Common),
    /// PCS over a grid of sample sizes
    Curve {
        #[command(flatten)]
        common: Common,
        /// comma-separated sample sizes
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
    },
}

#[derive(Args, Clone)]
pub struct Common {
    /// JSON run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// output directory (overrides the config)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// base seed (overrides POCRM_SEED and the config)
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// sample size
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub target: reproduce::Target,
    /// full replicate counts and sample sizes
    #[arg(long)]
    pub full: bool,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long, env = "POCRM_SEED", default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(w) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| config::config_err(format!("--workers: {e}")))?;
    }
    match cli.cmd {
        Cmd::Orders(OrdersCmd::Enumerate { rows, cols, out }) => commands::enumerate(rows, cols, out),
        Cmd::Orders(OrdersCmd::Select { common, mode, budget }) => commands::select(&common, mode, budget),
        Cmd::Consistency(ConsistencyCmd::Check { common, assert }) => commands::check(&common, assert),
        Cmd::Skeleton(SkeletonCmd::Calibrate { common, max_iter, step }) => {
            commands::calibrate(&common, max_iter, step)
        }
        Cmd::Simulate(SimulateCmd::Pcs(common)) => commands::pcs(&common),
        Cmd::Simulate(SimulateCmd::Curve { common, n_grid }) => commands::curve(&common, n_grid),
        Cmd::Benchmark(common) => commands::benchmark(&common),
        Cmd::Reproduce(args) => reproduce::run(&args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
