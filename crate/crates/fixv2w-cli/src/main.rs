//! `fixv2w`: batch pipeline for correcting invalid CVE-CWE mappings.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! divergence. Failures print a machine-readable JSON object on stderr.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};

use fixv2w_core::candidates::CandidateStrategy;
use fixv2w_core::eval::CompletionMode;
use fixv2w_core::remap::StatusFilter;

use commands::Context;
use config::RunConfig;
use manifest::OutputLock;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Numeric(_) => "numeric",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "fixv2w",
    version,
    about = "Build a CVE-CWE-CPE knowledge graph, train translational embeddings, and rank replacement CWEs for invalid mappings"
)]
struct Cli {
    /// JSON run configuration (flat dotted keys, e.g. {"data.feed": "..."}).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for artifacts and manifests.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// RNG seed for training and splits.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for parallel sections (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse (and optionally fetch) the configured inputs and report counts.
    Ingest {
        /// Fetch the feed and change history from the NVD API (uses the
        /// NVD_API_KEY environment variable when set).
        #[arg(long)]
        fetch: bool,
        /// On-disk cache for fetched pages.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        /// Start of the fetch window (YYYY-MM-DD).
        #[arg(long)]
        window_from: Option<NaiveDate>,
        /// End of the fetch window (YYYY-MM-DD).
        #[arg(long)]
        window_to: Option<NaiveDate>,
    },
    /// Replay the feed and change history into the graph state at a date.
    Snapshot {
        /// Snapshot date (defaults to the configured training date).
        #[arg(long)]
        as_of: Option<NaiveDate>,
    },
    /// Historical remap statistics over a date window.
    Longitudinal {
        #[arg(long)]
        from: Option<NaiveDate>,
        #[arg(long)]
        to: Option<NaiveDate>,
    },
    /// Train the embedding model on the training-date snapshot.
    Train,
    /// Rank replacement CWEs for every invalid mapping of one population.
    Fix {
        /// prohibited | discouraged
        #[arg(long)]
        status: String,
        /// cwe1003 | top25 | descendants | family | members | members-fnn | tailored
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Score the remap test set (training vs validation snapshot) and
    /// report coverage and rank metrics.
    Evaluate {
        /// prohibited | discouraged (defaults to both)
        #[arg(long)]
        status: Option<String>,
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Apply top-N fixes, retrain, and compare graph-completion metrics.
    RetrainEval {
        /// How many top predictions replace each invalid mapping (1-3).
        #[arg(long, default_value_t = 2)]
        top_n: usize,
        /// open | closed
        #[arg(long, default_value = "open")]
        mode: String,
    },
    /// Cross the remap test set with KEV / Exploit-DB observations.
    Exploits,
}

fn parse_status(s: &str) -> Result<StatusFilter, CliError> {
    s.parse().map_err(CliError::Config)
}

fn parse_strategy(s: &Option<String>) -> Result<Option<CandidateStrategy>, CliError> {
    s.as_deref().map(|s| s.parse().map_err(CliError::Config)).transpose()
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(out) = cli.out {
        config.apply("out.dir", serde_json::Value::String(out.display().to_string()))?;
    }
    if let Some(seed) = cli.seed {
        config.apply("seed", seed.into())?;
    }
    if let Some(threads) = cli.threads {
        config.apply("threads", threads.into())?;
    }
    config.validate()?;

    if config.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size the thread pool: {e}")))?;
    }

    let _lock = OutputLock::acquire(&config.out_dir)?;
    let ctx = Context { config };
    match cli.command {
        Command::Ingest { fetch, cache_dir, window_from, window_to } => {
            commands::ingest(&ctx, fetch, cache_dir, (window_from, window_to))
        }
        Command::Snapshot { as_of } => commands::snapshot(&ctx, as_of),
        Command::Longitudinal { from, to } => commands::longitudinal(&ctx, from, to),
        Command::Train => commands::train_command(&ctx),
        Command::Fix { status, strategy } => {
            commands::fix(&ctx, parse_status(&status)?, parse_strategy(&strategy)?)
        }
        Command::Evaluate { status, strategy } => {
            let status = status.as_deref().map(parse_status).transpose()?;
            commands::evaluate(&ctx, status, parse_strategy(&strategy)?)
        }
        Command::RetrainEval { top_n, mode } => {
            let mode: CompletionMode = mode.parse().map_err(CliError::Config)?;
            commands::retrain_eval(&ctx, top_n, mode)
        }
        Command::Exploits => commands::exploits(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let payload = serde_json::json!({
                "error": {"kind": e.kind(), "code": e.exit_code(), "message": e.message()}
            });
            eprintln!("{payload}");
            ExitCode::from(e.exit_code())
        }
    }
}
