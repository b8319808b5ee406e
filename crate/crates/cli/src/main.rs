mod commands;
mod provenance;
mod records;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use sceneseg_core::ClassVocabulary;

#[derive(Parser, Debug)]
#[command(name = "sceneseg", version, about = "Sound scene segmentation toolkit")]
struct Cli {
    /// error, warn, info, debug or trace
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,

    /// Worker threads for per-scene work; defaults to available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Class vocabulary, one name per line (default: 18 placeholder classes).
    #[arg(long, global = true)]
    vocab: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize scenes and their manifest.
    Mix(commands::mix::MixArgs),
    /// Run the multi-stage pipeline over a manifest.
    Run(commands::run::RunArgs),
    /// Score pipeline outputs against ground truth.
    Eval(commands::eval::EvalArgs),
    /// Fit per-class silence thresholds from labelled scores.
    Calibrate(commands::calibrate::CalibrateArgs),
    /// Evaluate loss kernels on JSON cases.
    Losses(commands::losses::LossesArgs),
    /// Mix, run with a degraded oracle and evaluate, end to end.
    PipelineDemo(commands::demo::DemoArgs),
}

/// Settings shared by every command.
#[derive(Debug, Clone)]
pub struct Global {
    pub workers: usize,
    pub vocab: ClassVocabulary,
    pub vocab_path: Option<PathBuf>,
}

impl Global {
    pub fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .context("building worker pool")
    }
}

fn run(cli: Cli) -> Result<()> {
    let workers = match cli.workers {
        Some(0) => anyhow::bail!("--workers must be at least 1"),
        Some(n) => n,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    let vocab = match &cli.vocab {
        Some(p) => ClassVocabulary::from_file(p)?,
        None => ClassVocabulary::default(),
    };
    let global = Global {
        workers,
        vocab,
        vocab_path: cli.vocab.clone(),
    };
    match cli.command {
        Command::Mix(a) => commands::mix::run(&global, a),
        Command::Run(a) => commands::run::run(&global, a),
        Command::Eval(a) => commands::eval::run(&global, a),
        Command::Calibrate(a) => commands::calibrate::run(&global, a),
        Command::Losses(a) => commands::losses::run(&global, a),
        Command::PipelineDemo(a) => commands::demo::run(&global, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(ToString::to_string).collect();
            let line = serde_json::json!({ "error": chain.join(": ") });
            eprintln!("{line}");
            ExitCode::from(1)
        }
    }
}
