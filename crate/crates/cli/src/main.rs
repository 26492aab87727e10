//! `clearing`: clear markets, analyse demand at given prices, run the random
//! supplier study and aggregate batch results.
//!
//! Exit codes: 0 success, 1 parse or usage error, 2 infeasible clearing,
//! 3 search or enumeration budget exceeded.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clearing_core::geometry::Norm;
use clearing_core::settings::{DEFAULT_NODE_BUDGET, DEFAULT_TOLERANCE};
use clearing_core::Settings;

#[derive(Debug, Parser)]
#[command(name = "clearing", version, about = "Market clearing and equilibrium analysis for block-bid auctions")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Relative numerical tolerance.
    #[arg(long, global = true, env = "CLEARING_TOL", default_value_t = DEFAULT_TOLERANCE)]
    pub tol: f64,
    /// Branch-and-bound node budget.
    #[arg(long, global = true, default_value_t = DEFAULT_NODE_BUDGET)]
    pub node_budget: usize,
    /// Norm used for distances and ρ: l2, l1 or linf.
    #[arg(long, global = true, default_value = "l2", value_parser = |s: &str| s.parse::<Norm>())]
    pub norm: Norm,
}

impl GlobalOpts {
    pub fn settings(&self) -> Settings {
        Settings { tol: self.tol, node_budget: self.node_budget, norm: self.norm }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Welfare optimum with equilibrium detection.
    Exact,
    /// Rule-based clearing that may reject in-the-money blocks.
    Euphemia,
    /// Convex hull pricing.
    Chp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clear a market and write an outcome report.
    Clear {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "chp")]
        mode: Mode,
        /// Report file; standard output when absent.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Demand sets, singleton flags and ρ at given prices (default: convexified prices).
    Analyze {
        #[arg(long)]
        input: PathBuf,
        /// One price per commodity, comma separated.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        price: Option<Vec<f64>>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Monte Carlo estimate of the equilibrium probability in the random supplier market.
    Simulate {
        /// Number of suppliers.
        #[arg(long)]
        n: usize,
        /// Number of convex suppliers.
        #[arg(long)]
        k: usize,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the per-trial verdicts as CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Aggregate a directory of `<name>.market.{csv,json}` and `<name>.outcome.json` pairs.
    Report {
        #[arg(long)]
        dir: PathBuf,
        /// Writes `<output>.csv` and `<output>.json`; CSV to standard output when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}
