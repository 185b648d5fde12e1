use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod run;

/// Regime classification, admissible solutions and Nash verification for
/// scalar two-player discounted games with piecewise-linear costs.
#[derive(Debug, Parser)]
#[command(name = "hjgame", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
struct Common {
    /// JSON document with `breakpoints`, `slopes` and optional `offsets`.
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving one subdirectory per run.
    #[arg(long, default_value = "runs")]
    runs_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
struct TolArgs {
    /// Sup bound on the Hamilton-Jacobi residual.
    #[arg(long)]
    tol_residual: Option<f64>,
    /// Tolerance of the jump conditions.
    #[arg(long)]
    tol_jump: Option<f64>,
    /// Grid step over constant pieces for residual checks and CSV output.
    #[arg(long)]
    grid_dx: Option<f64>,
    /// Checking and reporting window `lo,hi`.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    window: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ExportFormat {
    Csv,
    SvgData,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the sector of every slope pair and the regime.
    Classify {
        #[command(flatten)]
        common: Common,
    },
    /// Build the unique solution of a cooperative game.
    Solve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Build members of a one-parameter family of solutions.
    Family {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        tol: TolArgs,
        /// Datum `p1,p2` at the breakpoint.
        #[arg(long, value_parser = parse_pair, allow_hyphen_values = true, conflicts_with = "count")]
        pin: Option<[f64; 2]>,
        /// Number of members with geometrically spaced data.
        #[arg(long)]
        count: Option<usize>,
        /// Also build the solution passing through the origin.
        #[arg(long)]
        extra: bool,
    },
    /// Probe a conflicting game without admissible solutions.
    Nonexist {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        probes: usize,
    },
    /// Periodic solution on the periodic extension of a one-breakpoint config.
    Periodic {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Compare closed-loop costs with grid best responses.
    Verify {
        #[command(flatten)]
        common: Common,
        /// `solution.json` artifact of an earlier run.
        #[arg(long)]
        solution: PathBuf,
        /// Initial states, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        y: Vec<f64>,
        /// Step of the best-response grid.
        #[arg(long, default_value_t = 1e-3)]
        grid_dx: f64,
        /// Best-response window `lo,hi`; defaults to the solution window widened by 5.
        #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
        window: Option<[f64; 2]>,
        /// Constants `b1,b2` added to the feedback controls.
        #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
        feedback_bias: Option<[f64; 2]>,
        #[arg(long, default_value_t = 401)]
        controls: usize,
        /// Sweep budget of the value iteration.
        #[arg(long, default_value_t = 10_000)]
        max_sweeps: usize,
        #[arg(long, default_value_t = 40.0)]
        horizon: f64,
    },
    /// Simulate the closed loop from one initial state.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        solution: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        y: f64,
        #[arg(long, default_value_t = 40.0)]
        horizon: f64,
        #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
        feedback_bias: Option<[f64; 2]>,
    },
    /// Plot-ready profile and phase-plane data of a solution artifact.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        solution: PathBuf,
        #[arg(long, value_enum)]
        format: ExportFormat,
        #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
        window: Option<[f64; 2]>,
        #[arg(long)]
        grid_dx: Option<f64>,
    },
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(format!("expected two comma-separated numbers, got '{s}'"));
    }
    let a = parts[0].parse::<f64>().map_err(|e| format!("'{}': {e}", parts[0]))?;
    let b = parts[1].parse::<f64>().map_err(|e| format!("'{}': {e}", parts[1]))?;
    Ok([a, b])
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
