mod commands;
mod overlay;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_HELP: &str = "\
Exit codes:
  0  success
  1  other failure (bad configuration, non-convergent calibration, ...)
  2  missing input file
  3  malformed input stream or gap in the day sequence
  4  worked-example replay disagrees with the expected narration

Environment:
  FSS_WORKERS  number of worker threads for Monte Carlo work";

#[derive(Debug, Parser)]
#[command(name = "fss", version, about = "Forward selection scan and window scan outbreak detection", after_help = EXIT_HELP)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured replication count.
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = PlanChoice::Both)]
    pub plan: PlanChoice,
    /// Output directory, created if absent.
    #[arg(long, global = true, default_value = "fss-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlanChoice {
    Scan,
    Fss,
    Both,
}

impl PlanChoice {
    pub fn scan(self) -> bool {
        self != PlanChoice::Fss
    }

    pub fn fss(self) -> bool {
        self != PlanChoice::Scan
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search thresholds giving the target in-control ARL; writes calibration.json.
    Calibrate(CalibrateArgs),
    /// Run the plans over observed data; writes JSON-lines reports and an overlay.
    Monitor,
    /// Outbreak run-length study over the four standard placements; writes table1.csv/json.
    Simulate(SimulateArgs),
    /// Replay the 10x10 partitioning example from its marginal totals.
    #[command(name = "demo-figure1")]
    DemoFigure1,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Target in-control ARL; defaults to simulation.target_arl.
    #[arg(long)]
    pub target: Option<f64>,
    /// Refit the degrees-of-freedom model from bootstrap records first.
    #[arg(long)]
    pub fit_dof: bool,
    #[arg(long, default_value_t = 20)]
    pub dof_reps: usize,
    #[arg(long, default_value_t = 100)]
    pub dof_days: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Comma-separated outbreak sizes; defaults to 0, 0.5, 1, 2, ..., 9.
    #[arg(long, value_delimiter = ',')]
    pub deltas: Option<Vec<f64>>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("FSS_WORKERS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
