//! `lqmix` — solve, simulate and verify two-team linear-quadratic
//! mean-field problems from JSON problem documents.
//!
//! Exit codes: 0 success, 2 validation failure, 3 numerical failure
//! (blow-up / near-singular factor / non-finite states), 4 declared
//! tolerance failed in `--check` mode.

mod commands;
mod manifest;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lqmix", version, about = "Two-team LQ mean-field solver and experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the standing assumptions of a problem document.
    Validate {
        /// Problem document (JSON, schema "mfgt-spec/1").
        #[arg(long)]
        spec: PathBuf,
    },
    /// Solve the block Riccati system by both routes and export P, K and
    /// the feedback gains.
    Solve {
        #[arg(long)]
        spec: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Time-grid cells on [0, T].
        #[arg(long, default_value_t = 2000)]
        grid: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Exit 4 if a declared tolerance fails.
        #[arg(long)]
        check: bool,
    },
    /// Monte-Carlo simulation of the N-agent population under the
    /// decentralized strategy (N = first entry of --n-list).
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Population size(s); the first entry is used.
        #[arg(long = "n-list", value_delimiter = ',', default_value = "50")]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 400)]
        paths: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        grid: usize,
        #[arg(long)]
        check: bool,
    },
    /// Mean-field coupling convergence sweep: sup_t E||x^(Nk) - m_k||^2
    /// against N with fitted log-log slopes.
    ConvergeMf {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "n-list", value_delimiter = ',', default_value = "25,50,100,200,400")]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 400)]
        paths: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        grid: usize,
        #[arg(long)]
        check: bool,
    },
    /// Optimality-gap sweep against the exact best-response oracle.
    ConvergeGap {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "n-list", value_delimiter = ',', default_value = "4,8,16,32")]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 400)]
        paths: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        grid: usize,
        #[arg(long)]
        check: bool,
    },
    /// Run a named coalition-weight case (coop, zerosum, onesided-coop,
    /// onesided-comp): solve + simulate + gap study + case diagnostics.
    Case {
        /// Case name.
        #[arg(long)]
        case: String,
        /// Optional base coefficients; the case still fixes (alpha, beta).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "n-list", value_delimiter = ',', default_value = "4,8,16,32")]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 400)]
        paths: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        grid: usize,
        #[arg(long)]
        check: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { spec } => commands::run_validate(spec),
        Command::Solve { spec, out, grid, seed, check } => {
            commands::run_solve(spec, out, *grid, *seed, *check)
        }
        Command::Simulate { spec, out, n_list, paths, seed, grid, check } => {
            commands::run_simulate(spec, out, n_list, *paths, *seed, *grid, *check)
        }
        Command::ConvergeMf { spec, out, n_list, paths, seed, grid, check } => {
            commands::run_converge_mf(spec, out, n_list, *paths, *seed, *grid, *check)
        }
        Command::ConvergeGap { spec, out, n_list, paths, seed, grid, check } => {
            commands::run_converge_gap(spec, out, n_list, *paths, *seed, *grid, *check)
        }
        Command::Case { case, spec, out, n_list, paths, seed, grid, check } => {
            commands::run_case(case, spec.as_deref(), out, n_list, *paths, *seed, *grid, *check)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let report = serde_json::json!({
                "error": err.message(),
                "kind": err.kind(),
                "exit_code": err.exit_code(),
            });
            eprintln!("{report}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
