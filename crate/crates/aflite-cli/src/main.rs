use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use aflite::filter::Strategy;
use aflite_cli::config::{Mode, Overrides, RunConfig};
use aflite_cli::experiment::run_experiment;

/// Adversarial filtering of spuriously predictable dataset instances.
#[derive(Debug, Parser)]
#[command(name = "aflite", version, about)]
struct Cli {
    /// JSON config file; individual keys can be overridden by the flags
    /// below. Without a config, defaults run the synthetic sweep.
    config: Option<PathBuf>,

    /// Pipeline: filter, synthetic-sweep or afopt-check.
    #[arg(long)]
    mode: Option<Mode>,

    /// Input embeddings CSV (filter and afopt-check modes).
    #[arg(long)]
    embeddings: Option<PathBuf>,

    /// Directory for output artifacts.
    #[arg(long)]
    out_dir: Option<PathBuf>,

    /// Partitions (ensemble members) per filtering phase.
    #[arg(long)]
    m: Option<usize>,

    /// Train-split size per partition.
    #[arg(long)]
    t: Option<usize>,

    /// Slice size removed per phase.
    #[arg(long)]
    k: Option<usize>,

    /// Early-stopping predictability threshold.
    #[arg(long)]
    tau: Option<f64>,

    /// Minimum retained size.
    #[arg(long)]
    n: Option<usize>,

    /// Removal strategy: greedy, greedy_slicing or gumbel_sampling.
    #[arg(long)]
    strategy: Option<Strategy>,

    /// Master seed for filtering and synthetic generation.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads (default: AFLITE_THREADS, then available cores).
    #[arg(long)]
    threads: Option<usize>,

    /// Holdout fraction for evaluation, strictly between 0 and 1.
    #[arg(long)]
    holdout_fraction: Option<f64>,

    /// Write per-instance plot tuples alongside the reports.
    #[arg(long)]
    emit_plot_data: bool,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        mode: cli.mode,
        embeddings: cli.embeddings,
        out_dir: cli.out_dir,
        m: cli.m,
        t: cli.t,
        k: cli.k,
        tau: cli.tau,
        n: cli.n,
        strategy: cli.strategy,
        seed: cli.seed,
        threads: cli.threads,
        holdout_fraction: cli.holdout_fraction,
        emit_plot_data: cli.emit_plot_data,
    };
    overrides.apply(&mut config);
    run_experiment(&config)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
