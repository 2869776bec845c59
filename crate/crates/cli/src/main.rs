//! `msd`: stochastic dominance tests from the command line.
//!
//! Exit codes: 0 when a command completes (whatever the test decides), 2 when the contact
//! set is empty and the test is infeasible, 1 on any error.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "msd", version, about = "Multivariate stochastic dominance tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test H0: X dominates Y.
    Test(TestArgs),
    /// First- and second-order contribution curves of one sample.
    Curves(CurvesArgs),
    /// Run a Monte Carlo experiment, or draw a sample with --draw.
    Simulate(SimulateArgs),
    /// Fit a VAR by AIC and split its residuals at a break date.
    VarResiduals(VarArgs),
    /// Monotone transform, symmetrization or background mixing of a sample.
    Transform(TransformArgs),
}

/// Settings shared by every command that fits quantile maps.
#[derive(Args, Debug, Clone)]
pub struct FitArgs {
    /// Entropic regularization.
    #[arg(long, default_value_t = 0.2)]
    pub epsilon: f64,
    /// Band half-width for first-order curves [default: one shell spacing].
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Grid shells [default: derived from the sample size].
    #[arg(long, requires = "ns")]
    pub nr: Option<usize>,
    /// Grid directions [default: derived from the sample size].
    #[arg(long, requires = "nr")]
    pub ns: Option<usize>,
    /// Contribution function: norm, sqnorm, capped(c) or radial(r:v;...).
    #[arg(long, default_value = "norm")]
    pub rho: String,
    /// Comma-separated levels in (0, 1] [default: the shell radii].
    #[arg(long)]
    pub levels: Option<String>,
    /// Treat the last CSV column as observation weights.
    #[arg(long)]
    pub weighted: bool,
}

#[derive(Args, Debug)]
pub struct TestArgs {
    /// Sample from X.
    pub x: PathBuf,
    /// Sample from Y.
    pub y: PathBuf,
    /// Dominance order, 1 or 2.
    #[arg(long, default_value_t = 1)]
    pub order: u8,
    /// Statistic, S (supremum) or I (integral).
    #[arg(long, default_value = "S")]
    pub stat: String,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Contact-set threshold; "inf" uses every level.
    #[arg(long, default_value = "2")]
    pub tau: String,
    /// Variance floor.
    #[arg(long, default_value_t = 0.001)]
    pub nu: f64,
    /// Floor on the critical value.
    #[arg(long = "eta-floor", default_value_t = 0.0)]
    pub eta_floor: f64,
    #[arg(long, default_value_t = 200)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CurvesArgs {
    pub sample: PathBuf,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Experiment config file, or the name of a bundled config.
    #[arg(required_unless_present_any = ["draw", "list"])]
    pub config: Option<String>,
    /// Draw one sample from a named law or a distribution file instead.
    #[arg(long, conflicts_with = "config")]
    pub draw: Option<String>,
    /// Sample size for --draw.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// List bundled configs and named laws.
    #[arg(long)]
    pub list: bool,
    /// Use the config's full-scale sizes.
    #[arg(long)]
    pub full: bool,
    /// Override the replication count.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Override the bootstrap size.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Override the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, or the output file with --draw.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct VarArgs {
    /// Time series CSV with a leading ISO-8601 date column.
    pub series: PathBuf,
    /// Break date (YYYY-MM-DD).
    #[arg(long = "break")]
    pub break_date: String,
    /// Place the break date in the after window instead of the before window.
    #[arg(long)]
    pub break_after: bool,
    /// Largest order considered by AIC.
    #[arg(long, default_value_t = 4)]
    pub p_max: usize,
    /// Keep at most this many residuals on each side.
    #[arg(long)]
    pub window: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TransformArgs {
    pub sample: PathBuf,
    /// "symmetrize", "mix(eta=...)" or a map such as "softplus(a=1,b=0)".
    #[arg(long)]
    pub spec: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Treat the last CSV column as observation weights.
    #[arg(long)]
    pub weighted: bool,
    /// Output file.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Test(a) => commands::test(&a),
        Command::Curves(a) => commands::curves(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::VarResiduals(a) => commands::var_residuals(&a),
        Command::Transform(a) => commands::transform(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}
