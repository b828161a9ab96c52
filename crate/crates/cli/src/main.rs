//! `cosub`: simulate, fit, summarize, strategies and diagnostics on
//! run directories.

mod commands;
mod error;
mod run_dir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "cosub",
    version,
    about = "Joint clustering of choices and co-subscription networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with ground truth.
    Simulate(SimulateArgs),
    /// Run the Gibbs sampler and write its trace.
    Fit(FitArgs),
    /// MAP partition and conditional posterior summaries of a fit.
    Summarize(SummarizeArgs),
    /// Best offers, performance indicators and multi-offers.
    Strategies(StrategiesArgs),
    /// Per-agency AUC and choice fit, occupancy warnings.
    Diagnostics(DiagnosticsArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    /// JSON simulation config; omitted fields take the default scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Wide,
    EdgeList,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    choices: PathBuf,
    #[arg(long)]
    networks: PathBuf,
    #[arg(long, value_enum, default_value = "wide")]
    network_format: Format,
    #[arg(long)]
    out: PathBuf,
    /// JSON fit config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long = "H")]
    h: Option<usize>,
    #[arg(long = "R")]
    r: Option<usize>,
    #[arg(long)]
    alpha_c: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON hyperparameter overrides applied over the empirical defaults.
    #[arg(long)]
    hyper: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SummarizeArgs {
    #[arg(long)]
    run: PathBuf,
    /// Sweeps of the rerun with clusters frozen at the MAP partition.
    #[arg(long, default_value_t = 2000)]
    sweeps: usize,
    #[arg(long, default_value_t = 500)]
    burnin: usize,
    /// Seed of the rerun; defaults to the fit seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Skip the rerun and summarize the fit's own sweeps with `K_hat`
    /// clusters after aligning their labels.
    #[arg(long)]
    relabel: bool,
}

#[derive(Debug, Args)]
struct StrategiesArgs {
    #[arg(long)]
    run: PathBuf,
    /// Offer size for multi-offer strategies, at most 3.
    #[arg(long, default_value_t = 1)]
    multi: usize,
}

#[derive(Debug, Args)]
struct DiagnosticsArgs {
    #[arg(long)]
    run: PathBuf,
    /// Agencies with AUC below this value are flagged.
    #[arg(long, default_value_t = 0.75)]
    auc_flag: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Summarize(a) => commands::summarize(&a),
        Command::Strategies(a) => commands::strategies(&a),
        Command::Diagnostics(a) => commands::diagnostics(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
