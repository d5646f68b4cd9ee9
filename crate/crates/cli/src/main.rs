use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser, Debug)]
#[command(
    name = "swarmsync",
    version,
    about = "Adaptive formation control under switching topologies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario and write the trace CSV plus a gnuplot script.
    Simulate(SimulateArgs),
    /// Dwell-time, K-matrix and connectivity report.
    Analyze(RunArgs),
    /// Minimum separations of a recorded trace against every barrier.
    CheckSafety(TraceArgs),
    /// Minimum pair repulsion gains from the bounds measured on a trace.
    GainRule(TraceArgs),
    /// Repeat a scenario over consecutive seeds in parallel.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Scenario file (same as --config).
    #[arg(value_name = "CONFIG")]
    config_pos: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Record every N-th step.
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long, value_name = "SECONDS")]
    horizon_override: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Also write `weights_agent<i>.csv` with every weight entry per recorded instant.
    #[arg(long)]
    weights: bool,
}

#[derive(Args, Debug, Clone)]
pub struct TraceArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Trace CSV; defaults to `<out>/trace.csv`.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Number of seeds, starting at the configured seed.
    #[arg(long, default_value_t = 8)]
    runs: u64,
    /// Initial position jitter; overrides the file value.
    #[arg(long)]
    jitter: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::CheckSafety(a) => commands::check_safety(a),
        Command::GainRule(a) => commands::gain_rule(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error[{}]: {}", f.category, f.detail);
            ExitCode::from(f.code)
        }
    }
}
