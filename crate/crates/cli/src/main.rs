//! `flowplan`: solves the benchmark scenarios and writes CSV/JSON results.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "flowplan", version, about = "Time/energy optimal path planning in flow fields")]
struct Cli {
    /// Worker threads for the solver kernels (results do not depend on it).
    #[arg(long, global = true, env = "FLOWPLAN_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Concurrent policy iteration over a set of scalarization weights.
    SolveCpi(CpiArgs),
    /// Evolutionary multi-objective policy search.
    SolveMepi(MepiArgs),
    /// Minimum-time value iteration under the harmonic and Kruzkov transforms.
    CompareTransforms(CompareArgs),
    /// Closed-loop simulation of a stored solution.
    Rollout(RolloutArgs),
}

#[derive(Debug, Args)]
struct ProblemArgs {
    /// Builtin scenario name or path to a scenario JSON file.
    #[arg(long)]
    scenario: String,
    /// Grid resolution: points per axis for lattices, target size for unstructured grids.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    /// Sup-norm tolerance of the value solves.
    #[arg(long)]
    tol: Option<f64>,
    /// Also write the grid as JSON to this path.
    #[arg(long)]
    dump_grid: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CpiArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Number of log-spaced weights.
    #[arg(long)]
    alphas: Option<usize>,
    #[arg(long)]
    alpha_lo: Option<f64>,
    #[arg(long)]
    alpha_hi: Option<f64>,
    #[arg(long)]
    controls_per_axis: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MepiArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    pop: Option<usize>,
    #[arg(long)]
    gens: Option<usize>,
    #[arg(long)]
    ncp: Option<usize>,
    #[arg(long)]
    npar: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long, default_value = "ex1_obstacles")]
    scenario: String,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    dump_grid: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    #[arg(long)]
    scenario: String,
    /// Solution JSON written by `solve-cpi` or `solve-mepi`.
    #[arg(long)]
    solution: PathBuf,
    /// Comma-separated spatial start point.
    #[arg(long, allow_hyphen_values = true)]
    start: String,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    goal_radius: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match cli.command {
        Command::SolveCpi(a) => commands::solve_cpi(&a),
        Command::SolveMepi(a) => commands::solve_mepi(&a),
        Command::CompareTransforms(a) => commands::compare_transforms(&a),
        Command::Rollout(a) => commands::rollout(&a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("warning: solver did not converge; results were written");
            ExitCode::from(3)
        }
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code())
}
