//! `lharg` command-line interface.
//!
//! Every subcommand writes a CSV table (to `--output`, to `<out-dir>/<name>.csv`
//! when only an output directory is configured, or to stdout) followed by a
//! `#`-prefixed human summary on stdout. Exit codes: 0 success, 2 invalid
//! input, 3 numerical failure, 4 infeasible calibration.

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use lharg::Error;

mod commands;
mod settings;

use settings::Settings;

#[derive(Parser)]
#[command(name = "lharg", version, about = "Realized-variance LHARG models: estimation, simulation and option pricing")]
struct Cli {
    /// Flat `key = value` config file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model by maximum likelihood to RV and return series.
    Estimate(EstimateArgs),
    /// Solve for the variance risk premium nu1 matching a target ATM implied volatility.
    Calibrate(CalibrateArgs),
    /// Price an option chain.
    Price(PriceArgs),
    /// Simulate paths and write per-day summaries.
    Simulate(SimulateArgs),
    /// Term structure of log-return cumulants.
    Cumulants(CumulantsArgs),
    /// Price a chain and report implied-volatility RMSE by moneyness and maturity.
    Evaluate(EvaluateArgs),
    /// Compare the analytic MGF with Monte Carlo estimates.
    MgfCheck(MgfCheckArgs),
}

#[derive(Args, Clone, Default)]
pub struct ModelArgs {
    /// Fitted parameter file (key = value); may carry `nu1`.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// Reference parameter set when no fit is given: harg, p-lharg, zm-lharg.
    #[arg(long)]
    pub model: Option<String>,
    /// Variance risk premium.
    #[arg(long, allow_hyphen_values = true)]
    pub nu1: Option<f64>,
    /// Annualized risk-free rate (daily rate = rate / 252).
    #[arg(long)]
    pub rate: Option<f64>,
}

#[derive(Args, Clone, Default)]
pub struct StateArgs {
    /// RV history CSV (`date,rv`); with `--returns`, conditions on the last 22 days.
    #[arg(long)]
    pub rv: Option<PathBuf>,
    /// Return history CSV (`date,log_return`).
    #[arg(long)]
    pub returns: Option<PathBuf>,
    /// Use history up to and including this date.
    #[arg(long)]
    pub as_of: Option<NaiveDate>,
    /// Rescale RV to the mean squared return.
    #[arg(long)]
    pub rescale: bool,
}

#[derive(Args, Clone, Default)]
pub struct CosArgs {
    #[arg(long)]
    pub cos_terms: Option<usize>,
    #[arg(long)]
    pub cos_range: Option<f64>,
}

#[derive(Args, Clone, Default)]
pub struct FilterArgs {
    #[arg(long)]
    pub min_days: Option<i64>,
    #[arg(long)]
    pub max_days: Option<i64>,
    #[arg(long)]
    pub max_iv: Option<f64>,
    #[arg(long)]
    pub min_price: Option<f64>,
    #[arg(long)]
    pub min_moneyness: Option<f64>,
    #[arg(long)]
    pub max_moneyness: Option<f64>,
}

#[derive(Args, Clone, Default)]
pub struct OutputArgs {
    /// CSV output path (default: stdout).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub state: StateArgs,
    /// Variant to fit: harg, p-lharg, zm-lharg.
    #[arg(long)]
    pub model: Option<String>,
    /// Annualized risk-free rate.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Fix lambda instead of estimating it by regression.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// Write the fit as a key = value file.
    #[arg(long)]
    pub fit_out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub state: StateArgs,
    #[command(flatten)]
    pub cos: CosArgs,
    /// Target at-the-money implied volatility.
    #[arg(long)]
    pub target_iv: Option<f64>,
    /// Maturity in trading days (default 252).
    #[arg(long)]
    pub maturity: Option<usize>,
    /// Write the parameters together with the calibrated nu1.
    #[arg(long)]
    pub fit_out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct PriceArgs {
    /// Option chain CSV.
    #[arg(long)]
    pub chain: Option<PathBuf>,
    /// Apply the option filters before pricing.
    #[arg(long)]
    pub filter: bool,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub state: StateArgs,
    #[command(flatten)]
    pub cos: CosArgs,
    #[command(flatten)]
    pub thresholds: FilterArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub state: StateArgs,
    /// p (physical) or q (risk-neutral).
    #[arg(long)]
    pub measure: Option<String>,
    /// Days per path (default 22).
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Number of paths (default 10000).
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Binary dump of every path.
    #[arg(long)]
    pub raw: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct CumulantsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub state: StateArgs,
    /// Comma-separated maturities in trading days.
    #[arg(long)]
    pub maturities: Option<String>,
    /// p, q or both (default both).
    #[arg(long)]
    pub measure: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Option chain CSV with market prices.
    #[arg(long)]
    pub chain: Option<PathBuf>,
    /// Evaluate the chain as given, without the option filters.
    #[arg(long)]
    pub no_filter: bool,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub state: StateArgs,
    #[command(flatten)]
    pub cos: CosArgs,
    #[command(flatten)]
    pub thresholds: FilterArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct MgfCheckArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub state: StateArgs,
    /// p, q or both (default both).
    #[arg(long)]
    pub measure: Option<String>,
    /// Comma-separated maturities (default 1,5,22,63,126,252).
    #[arg(long)]
    pub maturities: Option<String>,
    /// Comma-separated real MGF arguments.
    #[arg(long, allow_hyphen_values = true)]
    pub z_real: Option<String>,
    /// Comma-separated characteristic-function arguments u (z = iu).
    #[arg(long, allow_hyphen_values = true)]
    pub z_imag: Option<String>,
    /// Number of paths (default 100000).
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Exit with a numerical failure when the largest deviation exceeds this many standard errors.
    #[arg(long)]
    pub max_se: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::CalibrationInfeasible { .. } => 4,
        e if e.is_validation() => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = Settings::load(cli.config.as_deref()).and_then(|s| match &cli.command {
        Command::Estimate(a) => commands::estimate(&s, a),
        Command::Calibrate(a) => commands::calibrate(&s, a),
        Command::Price(a) => commands::price(&s, a),
        Command::Simulate(a) => commands::simulate(&s, a),
        Command::Cumulants(a) => commands::cumulants(&s, a),
        Command::Evaluate(a) => commands::evaluate(&s, a),
        Command::MgfCheck(a) => commands::mgf_check(&s, a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
