//! `eosgd`: command-line driver for the experiments.
//!
//! Every subcommand reads an optional JSON `--config` and then applies its
//! flags on top. Exit status is 0 on success, 1 when `verify` or `analyze`
//! find violations, and 2 on errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "eosgd", version, about = "Gradient descent on regularized logistic regression: experiments and checks")]
struct Cli {
    /// Constants file; defaults to $EOSGD_CONSTANTS, then the bundled calibration.
    #[arg(long, global = true)]
    constants: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Steps to reach a risk gap over a λ grid, with an exponent fit.
    Sweep(SweepArgs),
    /// Monotone-GD lower bound on the hard dataset.
    Lowerbound(LowerBoundArgs),
    /// Convergent/divergent stepsize brackets over a λ grid.
    Critical(CriticalArgs),
    /// Population risk and step counts of several optimizers.
    Population(PopulationArgs),
    /// Randomized invariant suite; exits 1 on any violation.
    Verify(VerifyArgs),
    /// Dataset generation.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// One optimizer run, written as a trajectory CSV with a JSON sidecar.
    Run(RunArgs),
    /// Regularized minimizer and margin structure of a dataset.
    Reference(ReferenceArgs),
    /// Bound checks on a recorded trajectory; exits 1 on any violation.
    Analyze(AnalyzeArgs),
    /// Re-measures the constants file on the calibration suite.
    Calibrate(CalibrateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Output {
    /// Output file; stdout when absent. A `<stem>.plot.csv` companion is
    /// written next to it when the result has plot data.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `csv` or `json`; defaults to the extension of --out, else csv.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset file, replacing the configured source.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// small_reg, general_reg, inverse_smoothness or fixed.
    #[arg(long)]
    eta_rule: Option<String>,
    /// Fixed stepsize; implies --eta-rule fixed.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    drop_largest_two: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
pub struct LowerBoundArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    eos_lambda: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
pub struct CriticalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// `zero` or `ball`.
    #[arg(long)]
    w0: Option<String>,
    /// Ball radius as a fraction of ‖w_λ‖.
    #[arg(long)]
    radius_factor: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of ball starts per stepsize.
    #[arg(long)]
    starts: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
pub struct PopulationArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    noise_scale: Option<f64>,
    #[arg(long)]
    label_bias: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    mc_cap: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma list of gd_small, gd_large, nesterov, gd_unreg_earlystop, adaptive.
    #[arg(long, value_delimiter = ',')]
    arms: Option<Vec<String>>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    run_steps: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Subcommand, Debug)]
pub enum DatasetCommand {
    /// Writes a generated dataset as JSON.
    Gen(DatasetGenArgs),
}

#[derive(Args, Debug)]
pub struct DatasetGenArgs {
    /// Dataset source as JSON, e.g. {"kind": "hard", "gamma": 0.05}.
    #[arg(long)]
    config: Option<PathBuf>,
    /// hard, random, oned or population.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// One-dimensional points.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    z: Option<Vec<f64>>,
    #[arg(long)]
    noise_scale: Option<f64>,
    #[arg(long)]
    label_bias: Option<f64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// gd, nesterov or adaptive.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Gradient-norm tolerance; 0 runs the whole budget.
    #[arg(long)]
    tol: Option<f64>,
    /// Stop at this risk gap instead of a gradient-norm tolerance.
    #[arg(long)]
    gap: Option<f64>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    stride: Option<usize>,
    /// Initial point, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    w0: Option<Vec<f64>>,
    /// Trajectory CSV; the sidecar is `<out>.meta.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReferenceArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trajectory CSV written by `run`.
    #[arg(long)]
    traj: Option<PathBuf>,
    /// Reference written by `reference`.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    /// Comma list of bound names; all when absent.
    #[arg(long, value_delimiter = ',')]
    checks: Option<Vec<String>>,
    /// Margin, when the trajectory sidecar does not record it.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    /// Also run the one-dimensional analysis at this gap.
    #[arg(long)]
    eps_1d: Option<f64>,
    /// Bound-check CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// Constants file to write; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
