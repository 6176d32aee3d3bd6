mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "obstacle-control", version, about = "Obstacle-constrained Robin/Dirichlet states, their optimal control, and convergence sweeps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one key; repeatable, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Named benchmark used as the base configuration.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Also write the mesh at level `n` to `mesh.txt`.
    #[arg(long, global = true)]
    pub dump_mesh: bool,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run both state solvers and require agreement.
    #[arg(long, global = true)]
    pub cross_check: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Solve one state system; writes state.csv and report.txt.
    State,
    /// Minimize the cost; writes control.csv, history.csv and report.txt.
    Optimize,
    /// State and cost errors under mesh refinement.
    SweepH,
    /// Robin states approaching the Dirichlet limit.
    SweepAlpha,
    /// (h, alpha) lattice of optimal controls with limit corners.
    Diagram,
    /// Random convex-combination trials for the state ordering questions.
    Conjecture,
    /// Interpolation error orders for a smooth function.
    InterpCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::State => "state",
            Command::Optimize => "optimize",
            Command::SweepH => "sweep-h",
            Command::SweepAlpha => "sweep-alpha",
            Command::Diagram => "diagram",
            Command::Conjecture => "conjecture",
            Command::InterpCheck => "interp-check",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
