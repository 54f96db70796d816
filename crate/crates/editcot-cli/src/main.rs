//! `editcot` — answer questions under a memory of knowledge edits, evaluate
//! editing benchmarks, forge CoT-editor training data, and prebuild
//! retrieval indexes.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "editcot", version, about = "Iterative chain-of-thought editing pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one question against the configured edit memory.
    Answer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        question: String,
        /// Write the full pipeline trace as JSON to this path.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Evaluate a benchmark dataset under the batch protocol.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Instances per pooled edit memory.
        #[arg(long)]
        batch_size: Option<usize>,
        /// Seed for instance sampling.
        #[arg(long)]
        seed: Option<u64>,
        /// Evaluate a seeded subsample of this many instances.
        #[arg(long)]
        sample: Option<usize>,
        /// Evaluation wiring: edited (default) or locality.
        #[arg(long, default_value = "edited")]
        mode: String,
        /// Run a baseline instead of the engine (supported: naive-rag).
        #[arg(long)]
        baseline: Option<String>,
        /// Documents for the naive-rag baseline.
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Concurrent instance runs.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Report JSON path (default: <output_dir>/eval-report.json).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Manufacture CoT-editor training data from a question corpus.
    Forge {
        #[arg(long)]
        config: PathBuf,
        /// Override forge.conflict_threshold.
        #[arg(long)]
        threshold: Option<f64>,
        /// Concurrent question runs.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Training JSONL path (default: <output_dir>/training.jsonl).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Report JSON path (default: <output_dir>/forge-report.json).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Prebuild and persist a retrieval index for the configured memory.
    Index {
        #[arg(long)]
        config: PathBuf,
        /// Index JSON path (default: <output_dir>/index.json).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Answer { config, question, trace } => commands::answer(&config, &question, trace),
        Command::Eval { config, batch_size, seed, sample, mode, baseline, k, parallel, output } => {
            commands::eval(&config, batch_size, seed, sample, &mode, baseline, k, parallel, output)
        }
        Command::Forge { config, threshold, parallel, output, report } => {
            commands::forge(&config, threshold, parallel, output, report)
        }
        Command::Index { config, output } => commands::index(&config, output),
    };
    if let Err(e) = result {
        eprintln!("editcot: {e}");
        std::process::exit(e.exit_code());
    }
}
