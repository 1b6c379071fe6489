mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Revise recipes with a grounded prompt and evaluate the revisions with
/// step-by-step A/B annotation.
#[derive(Debug, Parser)]
#[command(name = "souschef", version)]
pub struct Cli {
    /// Seed for sampling and A/B flips.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file (or directory for `analyze`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Run manifest path; defaults to run_manifest.json beside the output.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Identity,
    Scripted,
    Remote,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw the stratified sample from a corpus file.
    Sample {
        #[arg(long)]
        corpus: PathBuf,
        /// TOML sample spec; defaults to 10 classes x (5 long + 5 short).
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Revise every recipe in a sampled file.
    Revise {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = BackendKind::Identity)]
        backend: BackendKind,
        /// JSON map of prompt fingerprint to completion (scripted backend).
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long, env = "LLM_BASE_URL", default_value = "https://api.openai.com/v1")]
        base_url: String,
        #[arg(long, env = "LLM_MODEL", default_value = "text-davinci-003")]
        model: String,
        #[arg(long, default_value_t = 0.7)]
        temperature: f64,
        #[arg(long, default_value_t = 1024)]
        max_tokens: u32,
        #[arg(long, default_value_t = 3)]
        attempts: u32,
        #[arg(long, default_value_t = 4)]
        max_in_flight: usize,
        /// Per-recipe result logs are appended here.
        #[arg(long, default_value = "results")]
        results_dir: PathBuf,
    },
    /// Build A/B annotation tasks from originals and revisions.
    MakeTasks {
        #[arg(long)]
        sampled: PathBuf,
        #[arg(long)]
        revisions: PathBuf,
        #[arg(long, default_value_t = 3)]
        target: u32,
    },
    /// Run the annotation service until interrupted.
    Serve {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long, env = "SOUSCHEF_HOST", default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = "SOUSCHEF_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long = "log", env = "SOUSCHEF_LOG", default_value = "annotations.log.jsonl")]
        log_path: PathBuf,
        #[arg(long, env = "SOUSCHEF_DEADLINE_MINUTES", default_value_t = 60)]
        deadline_minutes: i64,
        /// Overrides the per-task annotation target.
        #[arg(long, env = "SOUSCHEF_TARGET")]
        target: Option<u32>,
        /// Directory of browser assets served at `/`.
        #[arg(long, env = "SOUSCHEF_STATIC_DIR")]
        static_dir: Option<PathBuf>,
    },
    /// Compute the evaluation report from tasks and responses.
    Analyze {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        responses: PathBuf,
        /// Also write the vote matrices and series behind each statistic.
        #[arg(long)]
        raw: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
