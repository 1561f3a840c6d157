//! `ntc`: planners, simulators, certificates and bounds for ReLU transport
//! controls, driven by JSON and CSV files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "ntc", version, about = "Control of neural transport equations with ReLU fields")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for particle work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Plan a one-dimensional schedule.
    Plan1d(Plan1dArgs),
    /// Plan a schedule in any dimension.
    Plan(PlanArgs),
    /// Push a density or particle cloud through a schedule.
    Simulate(SimulateArgs),
    /// Re-run a schedule and measure its terminal error.
    Certify(CertifyArgs),
    /// Plan towards the histogram of target samples.
    SampleTarget(SampleTargetArgs),
    /// Monte Carlo coverage of the histogram concentration bound.
    Coverage(CoverageArgs),
    /// Evaluate complexity and entropy bounds for a schedule.
    Bounds(BoundsArgs),
    /// Regenerate data files for a figure.
    Repro(ReproArgs),
}

#[derive(Args, Debug)]
struct Plan1dArgs {
    /// Density JSON or family name.
    #[arg(long, default_value = "uniform-box")]
    source: String,
    #[arg(long)]
    target: String,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 1.0)]
    duration: f64,
    /// Explicit controller from the uniform density on (0, 1).
    #[arg(long)]
    exact: bool,
    /// Steps of the explicit controller.
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value = "uniform-box")]
    source: String,
    #[arg(long)]
    target: String,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 1.0)]
    duration: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Independently re-run the schedule on the source.
    #[arg(long)]
    certify: bool,
    #[arg(long, default_value_t = ntc_core::plannernd::DEFAULT_PARTICLES)]
    particles: usize,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, conflicts_with = "particles", required_unless_present = "particles")]
    density: Option<PathBuf>,
    /// Particle CSV, one point per row.
    #[arg(long)]
    particles: Option<PathBuf>,
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the density after every arc as CSV.
    #[arg(long, requires = "density")]
    trace: bool,
    #[arg(long, default_value = "trace.csv")]
    trace_out: PathBuf,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    /// Piecewise-constant density JSON or family name.
    #[arg(long, default_value = "uniform-box")]
    source: String,
    #[arg(long)]
    target: String,
    #[arg(long)]
    schedule: PathBuf,
    /// Planning accuracy the tolerance is derived from.
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = ntc_core::plannernd::DEFAULT_PARTICLES)]
    particles: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SampleTargetArgs {
    /// CSV of target samples.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, default_value = "uniform-box")]
    source: String,
    /// Bin width, or `auto` for the optimal width.
    #[arg(long, default_value = "auto")]
    h: String,
    /// Lipschitz constant of the target.
    #[arg(long = "L", default_value_t = 1.0)]
    lipschitz: f64,
    #[arg(long, default_value_t = 0.05)]
    tau: f64,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Measure of the target support.
    #[arg(long, default_value_t = 1.0)]
    supp: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CoverageArgs {
    #[arg(long, default_value = "uniform-box")]
    target: String,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long = "N", default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    h: f64,
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[arg(long)]
    schedule: PathBuf,
    /// Half-width of the cube holding both supports.
    #[arg(long)]
    r: f64,
    #[arg(long)]
    h: f64,
    /// Gap width; defaults to the planner's choice.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    eps: f64,
    /// Lower height bound.
    #[arg(long)]
    c: f64,
    /// Upper height bound.
    #[arg(long)]
    k: f64,
    /// Piecewise-constant initial density for the entropy check.
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReproArgs {
    #[arg(value_parser = ["dilation-figure"])]
    figure: String,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Height of the initial block.
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 0.0)]
    x0: f64,
    #[arg(long, default_value_t = std::f64::consts::LN_2)]
    w: f64,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("NTC_LOG")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(cli) {
        Ok(commands::Status::Ok) => ExitCode::SUCCESS,
        Ok(commands::Status::Violated(msg)) => {
            eprintln!("bound violated: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
