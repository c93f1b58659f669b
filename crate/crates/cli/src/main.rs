//! `accabet`: batch entry points for recommendations, backtests, filter
//! statistics, oracle checks and the HTTP service.
//!
//! Exit codes: 0 success, 2 any error, 3 no bet (the search ended without an
//! accumulator meeting the thresholds).

mod commands;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use accabet_core::backtest::StrategyCombo;
use accabet_core::FilterMode;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "accabet", version, about = "Accumulator bet selection and season backtesting")]
struct Cli {
    /// Start the HTTP service on this address (for example 127.0.0.1:8080).
    #[arg(long, value_name = "ADDR")]
    serve: Option<String>,

    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Search one matchday for an accumulator and print it with its stakes.
    Recommend(RecommendArgs),
    /// Replay a season under one or more strategy combinations.
    Backtest(BacktestArgs),
    /// Per-matchday candidate counts before and after dominance filtering.
    FilterStats,
    /// Compare the stochastic search with exhaustive enumeration.
    Oracle(OracleArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

/// Options shared by every subcommand.
#[derive(Debug, Args)]
pub struct Common {
    /// Season CSV files, directories of them, or glob patterns.
    #[arg(long, global = true, num_args = 1.., value_name = "PATH")]
    season: Vec<String>,
    /// External probability feed (League,Date,HomeTeam,AwayTeam,PH,PD,PA) used instead of inverse odds.
    #[arg(long, global = true, value_name = "CSV")]
    probabilities: Option<PathBuf>,
    /// Minimum accumulator probability.
    #[arg(long = "pmin", global = true, default_value_t = 0.25)]
    p_min: f64,
    /// Expected value the search stops at.
    #[arg(long, global = true, default_value_t = 2.0)]
    min_exp: f64,
    /// Search time limit in seconds [default: 600, or 5 per run for oracle].
    #[arg(long, global = true, value_name = "SECS")]
    max_time: Option<f64>,
    /// Agents per bookmaker population.
    #[arg(long, global = true, default_value_t = 50)]
    agents: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Dominance filter; backtest accepts several (comma separated) for one row each.
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_filter)]
    filter: Vec<FilterMode>,
    /// Upper bound on accumulator legs.
    #[arg(long, global = true)]
    max_legs: Option<usize>,
    /// Stop each search after this many iterations; makes runs independent of machine speed.
    #[arg(long, global = true)]
    max_iterations: Option<u64>,
    /// Worker threads for the per-bookmaker populations.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Write the primary output here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn parse_filter(raw: &str) -> Result<FilterMode, String> {
    raw.parse()
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    matchday: u32,
    /// Print per-iteration search progress to stderr as CSV.
    #[arg(long)]
    trace: bool,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    /// Strategy combinations to run [default: all four].
    #[arg(long, value_delimiter = ',', value_parser = parse_combo)]
    combo: Vec<StrategyCombo>,
    /// Starting bankroll; gains are reported relative to it.
    #[arg(long, default_value_t = 100.0)]
    initial: f64,
    /// Write the per-wager ledger of every row to this CSV file.
    #[arg(long, value_name = "PATH")]
    ledger: Option<PathBuf>,
    /// Write cumulative gains per matchday for every row to this CSV file.
    #[arg(long, value_name = "PATH")]
    gains: Option<PathBuf>,
}

fn parse_combo(raw: &str) -> Result<StrategyCombo, String> {
    raw.parse().map_err(|e: accabet_core::backtest::BacktestError| e.to_string())
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Generate a random single-bookmaker instance with this many candidates
    /// instead of reading one from --season.
    #[arg(long, conflicts_with = "matchday")]
    candidates: Option<usize>,
    /// Seed for the random instance.
    #[arg(long, default_value_t = 1)]
    instance_seed: u64,
    /// Matchday to take the instance from (with --season).
    #[arg(long)]
    matchday: Option<u32>,
    /// Bookmaker whose filtered candidates form the instance [default: the one with most candidates].
    #[arg(long)]
    bookmaker: Option<String>,
    /// Solver runs, seeded --seed, --seed + 1, ...
    #[arg(long, default_value_t = 100)]
    runs: u64,
    /// Enumerate instances above the soft candidate limit.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
}

/// Outcome of a command that did not fail.
pub enum Status {
    Done,
    NoBet,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match (cli.serve, cli.command) {
        (Some(addr), None) | (None, Some(Command::Serve(ServeArgs { addr }))) => commands::serve(&cli.common, &addr),
        (Some(_), Some(_)) => Err(anyhow::anyhow!("--serve cannot be combined with a subcommand")),
        (None, Some(Command::Recommend(args))) => commands::recommend(&cli.common, &args),
        (None, Some(Command::Backtest(args))) => commands::backtest(&cli.common, &args),
        (None, Some(Command::FilterStats)) => commands::filter_stats(&cli.common),
        (None, Some(Command::Oracle(args))) => commands::oracle(&cli.common, &args),
        (None, None) => Err(anyhow::anyhow!("no subcommand given; see --help")),
    };
    match result {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::NoBet) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
