//! `longadapt`: synthetic data generation, preprocessing, evaluation,
//! statistics and reporting.
//!
//! Exit codes: 0 success, 1 run failure, 2 input error, 3 refusal to
//! overwrite existing output.

mod commands;
mod config;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "longadapt", version, about = "Personalized affect classification for longitudinal studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic study (manifest and session CSVs).
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Window a study and write the instance cache.
    Preprocess {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        window_seconds: f64,
        #[arg(long, default_value_t = 1.0)]
        shift_seconds: f64,
        #[arg(long, default_value_t = 0.5)]
        min_label_fraction: f64,
        #[arg(long)]
        force: bool,
    },
    /// Run the chronological evaluation protocol.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
    },
    /// One-sided Wilcoxon signed-rank tests between methods.
    Stats {
        #[arg(long)]
        results: PathBuf,
        /// Comparisons `A:B` testing A > B, e.g. `PER:GEN`.
        #[arg(long, num_args = 1.., required = true)]
        compare: Vec<String>,
        /// Keep zero differences in the ranking (Pratt).
        #[arg(long)]
        pratt: bool,
        /// Also write the JSON to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Markdown tables and merged ROC curves from an evaluation directory.
    Report {
        #[arg(long)]
        results: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth {
            config,
            seed,
            out,
            force,
        } => commands::synth(&config, seed, out.as_deref(), force),
        Command::Preprocess {
            manifest,
            out,
            window_seconds,
            shift_seconds,
            min_label_fraction,
            force,
        } => commands::preprocess(
            &manifest,
            &out,
            longadapt::preprocess::WindowConfig {
                window_seconds,
                shift_seconds,
                min_label_fraction,
            },
            force,
        ),
        Command::Evaluate { config } => commands::evaluate(&config),
        Command::Stats {
            results,
            compare,
            pratt,
            out,
        } => commands::stats(&results, &compare, pratt, out.as_deref()),
        Command::Report { results } => commands::report(&results),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
