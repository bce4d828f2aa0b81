//! The `ddee` executable: the extraction workflow as subcommands.
//!
//! Every subcommand is a thin adapter over one library operation: `ingest`
//! converts corpora to the canonical format, `stats` counts, `balance`
//! resamples event types, `defs` builds or inspects the ontology, `run`
//! executes extraction stages, and `score`/`report` evaluate predictions.
//! Settings come from a TOML config file; flags override it. Exit codes:
//! 0 success, 1 domain error, 2 usage error.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use config::AppConfig;

/// A command failure, split by exit code: usage errors (2) mean the
/// invocation itself was wrong, domain errors (1) mean the work failed.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

macro_rules! domain_errors {
    ($($ty:ty),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> CliError {
                CliError::Domain(e.to_string())
            }
        })*
    };
}

domain_errors!(
    ddee_core::corpus::CorpusError,
    ddee_core::ontology::OntologyError,
    ddee_core::balancer::BalanceError,
    ddee_core::prompting::PromptError,
    ddee_core::llm::LlmError,
    ddee_core::pipeline::PipelineError,
    ddee_core::evaluator::EvalError,
);

#[derive(Debug, Parser)]
#[command(
    name = "ddee",
    version,
    about = "Definition-driven document-level event extraction",
    subcommand_required = true,
    arg_required_else_help = true
)]
pub struct Cli {
    /// TOML config file (default: ./ddee.toml when present)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

/// Which extraction stages `run` executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RunStage {
    /// Stage 1 only: event detection
    Detect,
    /// Stage 2 only: argument extraction over stored detections
    Args,
    /// Both stages plus prediction assembly
    Full,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a corpus to the canonical JSON-lines format
    Ingest {
        /// Source corpus file
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Source format: canonical-jsonl or wikievents-jsonl
        #[arg(long, value_name = "FORMAT", default_value = "canonical-jsonl")]
        format: String,
        /// Destination canonical JSON-lines file
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Print corpus counts and the per-type histogram
    Stats {
        /// Corpus to inspect (default: [paths].corpus)
        #[arg(long, value_name = "FILE")]
        corpus: Option<PathBuf>,
    },
    /// Resample the corpus so every event type hits a target count
    Balance {
        /// Mentions to keep per event type (default: [balance].target_per_type)
        #[arg(long, value_name = "N")]
        target_per_type: Option<usize>,
        /// Sampling seed (default: [balance].seed, then 0)
        #[arg(long, value_name = "SEED")]
        seed: Option<u64>,
        /// Destination for the balanced corpus
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Destination for the sampling plan (default: <out> with .plan.json)
        #[arg(long, value_name = "FILE")]
        plan: Option<PathBuf>,
        /// Cap on total sampled mentions (default: [balance].max_total)
        #[arg(long, value_name = "N")]
        max_total: Option<usize>,
    },
    /// Generate the ontology from the corpus, or load and summarize it
    Defs {
        /// Derive the skeleton from the corpus and write model definitions
        #[arg(long, conflicts_with = "load")]
        generate: bool,
        /// Load the ontology and print a summary
        #[arg(long)]
        load: bool,
        /// Serve definition responses from this replay store (offline)
        #[arg(long, value_name = "FILE")]
        replay: Option<PathBuf>,
        /// Model name (default: [provider].model)
        #[arg(long, value_name = "NAME")]
        provider: Option<String>,
        /// Ontology file to write or read (default: [paths].ontology)
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Execute extraction stages over the corpus
    Run {
        /// Stage(s) to execute
        #[arg(long, value_enum, default_value_t = RunStage::Full)]
        stage: RunStage,
        /// Prompt style: ddee or ddee-cot (default: [prompt].style, then ddee)
        #[arg(long, value_name = "STYLE")]
        style: Option<String>,
        /// Prompt budget in characters (default: [prompt].budget_chars, then unlimited)
        #[arg(long, value_name = "N")]
        budget: Option<usize>,
        /// Model name (default: [provider].model)
        #[arg(long, value_name = "NAME")]
        provider: Option<String>,
        /// Serve responses from this replay store instead of the network
        #[arg(long, value_name = "FILE")]
        replay: Option<PathBuf>,
        /// Run directory for records and predictions (default: [paths].run_dir)
        #[arg(long, value_name = "DIR")]
        run_dir: Option<PathBuf>,
    },
    /// Score a prediction file against gold annotations
    Score {
        /// Gold corpus (default: [paths].corpus)
        #[arg(long, value_name = "FILE")]
        gold: Option<PathBuf>,
        /// Predictions, or a canonical corpus to self-score
        /// (default: <run_dir>/predictions.jsonl)
        #[arg(long, value_name = "FILE")]
        pred: Option<PathBuf>,
        /// Matching mode: offset or text (default: [evaluation].mode, then offset)
        #[arg(long, value_name = "MODE")]
        mode: Option<String>,
    },
    /// Write report.csv and report.md for a scored run
    Report {
        /// Include the published reference scoreboard
        #[arg(long)]
        with_reference: bool,
        /// Gold corpus (default: [paths].corpus)
        #[arg(long, value_name = "FILE")]
        gold: Option<PathBuf>,
        /// Predictions, or a canonical corpus to self-score
        /// (default: <run_dir>/predictions.jsonl)
        #[arg(long, value_name = "FILE")]
        pred: Option<PathBuf>,
        /// Matching mode: offset or text (default: [evaluation].mode, then offset)
        #[arg(long, value_name = "MODE")]
        mode: Option<String>,
        /// Directory for the report files (default: [paths].run_dir, then .)
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

/// Load the config named by `--config`, or `./ddee.toml` when present, or
/// the all-defaults config. An explicitly named file must exist.
fn load_config(flag: Option<&PathBuf>) -> Result<AppConfig, CliError> {
    match flag {
        Some(path) => AppConfig::load(path),
        None => {
            let default = PathBuf::from("ddee.toml");
            if default.is_file() {
                AppConfig::load(&default)
            } else {
                Ok(AppConfig::default())
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let config = load_config(cli.config.as_ref())?;
    match cli.command {
        Command::Ingest { input, format, out } => commands::ingest(&input, &format, &out),
        Command::Stats { corpus } => commands::stats(&config, corpus.as_deref()),
        Command::Balance {
            target_per_type,
            seed,
            out,
            plan,
            max_total,
        } => commands::balance(&config, target_per_type, seed, &out, plan.as_deref(), max_total),
        Command::Defs {
            generate,
            load,
            replay,
            provider,
            out,
        } => commands::defs(
            &config,
            generate,
            load,
            replay.as_deref(),
            provider.as_deref(),
            out.as_deref(),
        ),
        Command::Run {
            stage,
            style,
            budget,
            provider,
            replay,
            run_dir,
        } => commands::run(
            &config,
            stage,
            style.as_deref(),
            budget,
            provider.as_deref(),
            replay.as_deref(),
            run_dir.as_deref(),
        ),
        Command::Score { gold, pred, mode } => {
            commands::score(&config, gold.as_deref(), pred.as_deref(), mode.as_deref())
        }
        Command::Report {
            with_reference,
            gold,
            pred,
            mode,
            out,
        } => commands::report(
            &config,
            with_reference,
            gold.as_deref(),
            pred.as_deref(),
            mode.as_deref(),
            out.as_deref(),
        ),
    }
}

/// Parse arguments and execute; the process exit code is returned rather
/// than applied, so tests can call this in-process.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // help and version land here too; clap knows the right code
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
