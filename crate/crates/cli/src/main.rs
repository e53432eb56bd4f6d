//! `ratact`: experiment runner for trainable rational activations.

mod commands;
mod config;
mod error;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ratact", version, about = "Experiments with trainable rational activation functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit rational coefficients to a reference activation.
    FitInit(FitInitArgs),
    /// Train on a non-stationary task stream and report plasticity.
    TrainContinual(RunArgs),
    /// Grid over numerator and denominator degrees, normalized by a ReLU baseline.
    DegreeSweep(RunArgs),
    /// Empirical NTK spectra and numerical rank.
    Ntk(NtkArgs),
    /// Fitted-Q overestimation probe on a chain MDP.
    TdProbe(RunArgs),
    /// Render a CSV file as an SVG line plot or heatmap.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    Original,
    Constrained,
}

#[derive(Debug, Args)]
pub struct FitInitArgs {
    /// identity, relu, leaky-relu or tanh.
    #[arg(long, default_value = "leaky-relu")]
    pub target: String,
    /// Negative-side slope for leaky-relu.
    #[arg(long, default_value_t = ratact_core::fit::DEFAULT_LEAKY_SLOPE)]
    pub slope: f64,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true, default_values_t = [-5.0, 5.0])]
    pub range: Vec<f64>,
    /// Numerator degree n and denominator degree m.
    #[arg(long, num_args = 2, value_names = ["N", "M"], default_values_t = [3, 2])]
    pub degrees: Vec<usize>,
    #[arg(long, value_enum, default_value = "original")]
    pub variant: VariantArg,
    /// Constrained regularizer scale.
    #[arg(long, default_value_t = ratact_core::rational::DEFAULT_C)]
    pub c: f64,
    /// Constrained regularizer exponent (default n + 1).
    #[arg(long)]
    pub d: Option<u32>,
    #[arg(long, default_value_t = 1001)]
    pub grid: usize,
    /// Output directory (falls back to RATACT_OUT_DIR, then ./out).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON experiment config.
    pub config: PathBuf,
    /// Output directory (overrides the config's `out_dir`, then RATACT_OUT_DIR).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run only this seed instead of the config's seed list.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parallel runs.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct NtkArgs {
    /// JSON experiment config; not needed with --self-test.
    #[arg(required_unless_present = "self_test")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Check the rank computation on an identity Jacobian of this batch size.
    #[arg(long, value_name = "B")]
    pub self_test: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PlotKind {
    Line,
    Heatmap,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    pub csv: PathBuf,
    #[arg(long, value_enum, default_value = "line")]
    pub kind: PlotKind,
    /// SVG path; defaults to the CSV path with an .svg extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub title: Option<String>,
    #[arg(long)]
    pub log_y: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::FitInit(a) => commands::fit::run(&a),
        Command::TrainContinual(a) => commands::continual::run(&a),
        Command::DegreeSweep(a) => commands::sweep::run(&a),
        Command::Ntk(a) => commands::ntk::run(&a),
        Command::TdProbe(a) => commands::td::run(&a),
        Command::Plot(a) => commands::plot::run(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
