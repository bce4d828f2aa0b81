//! Subcommand implementations.
//!
//! Each function is a thin adapter: resolve settings (flag wins over config
//! file), call the library operation, print the result. Side-effect notes go
//! to stderr so stdout stays machine-readable where a format is promised
//! (CSV for `score`, Markdown for `report`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ddee_core::balancer::{apply_balance, plan_balance, save_plan, type_histogram, BalanceConfig};
use ddee_core::corpus::{
    corpus_stats, load_canonical_jsonl, load_corpus, write_canonical_jsonl, Corpus, CorpusFormat,
};
use ddee_core::evaluator::{emit_report, report_csv, report_markdown, score_report, MatchMode, Scoreboard};
use ddee_core::llm::{
    registry, Cache, ClientConfig, HttpProvider, LlmClient, ProviderConfig, ReplayProvider,
};
use ddee_core::ontology::{
    derive_skeleton, generate_definitions, load_ontology, save_ontology, OntologySource,
};
use ddee_core::pipeline::{PipelineRun, PredictionSet, RunDir, RunOutcome, RunRecord, Stage};
use ddee_core::prompting::{PromptBudget, PromptStyle, TemplateSet};

use crate::config::{AppConfig, ProviderBlock};
use crate::{CliError, RunStage};

/// Pick the flag value, then the config value; otherwise a usage error
/// telling the user both ways to supply it.
fn require_path(flag: Option<&Path>, config: Option<&PathBuf>, hint: &str) -> Result<PathBuf, CliError> {
    flag.map(Path::to_path_buf)
        .or_else(|| config.cloned())
        .ok_or_else(|| CliError::Usage(format!("missing {hint}")))
}

fn parse_mode(flag: Option<&str>, config: &AppConfig) -> Result<MatchMode, CliError> {
    match flag.or(config.evaluation.mode.as_deref()) {
        Some(s) => s.parse().map_err(CliError::Usage),
        None => Ok(MatchMode::Offset),
    }
}

fn parse_style(flag: Option<&str>, config: &AppConfig) -> Result<PromptStyle, CliError> {
    match flag.or(config.prompt.style.as_deref()) {
        Some(s) => s.parse().map_err(CliError::Usage),
        None => Ok(PromptStyle::Ddee),
    }
}

/// Resolve a model name to connection settings: built-in endpoint data for
/// known models, with any `[provider]` fields overriding. Unknown names are
/// allowed only when the config supplies the endpoint and key variable.
fn provider_config(block: &ProviderBlock, model: &str) -> Result<ProviderConfig, CliError> {
    let mut config = match registry::provider_for_model(model) {
        Some(c) => c,
        None => {
            let (Some(endpoint_url), Some(api_key_env)) =
                (block.endpoint_url.clone(), block.api_key_env.clone())
            else {
                return Err(CliError::Domain(format!(
                    "unknown model {model:?} (known: {}); custom models need \
                     [provider].endpoint_url and [provider].api_key_env",
                    registry::known_models().join(", ")
                )));
            };
            ProviderConfig {
                endpoint_url,
                model_name: model.to_string(),
                api_key_env,
                temperature: 0.0,
                max_output_tokens: 2048,
                timeout_secs: 120,
            }
        }
    };
    if let Some(v) = &block.endpoint_url {
        config.endpoint_url = v.clone();
    }
    if let Some(v) = &block.api_key_env {
        config.api_key_env = v.clone();
    }
    if let Some(v) = block.temperature {
        config.temperature = v;
    }
    if let Some(v) = block.max_output_tokens {
        config.max_output_tokens = v;
    }
    if let Some(v) = block.timeout_secs {
        config.timeout_secs = v;
    }
    Ok(config)
}

/// A completion client: scripted replay when a store is given, otherwise a
/// live provider (which fails fast when the API key variable is unset) with
/// the optional on-disk cache.
fn build_client(
    config: &AppConfig,
    provider: &ProviderConfig,
    replay: Option<&Path>,
) -> Result<LlmClient, CliError> {
    let mut client_config = ClientConfig::default();
    if let Some(n) = config.provider.in_flight_limit {
        client_config.in_flight_limit = n;
    }
    client_config.requests_per_minute = config.provider.requests_per_minute;

    match replay {
        Some(path) => Ok(LlmClient::new(
            Box::new(ReplayProvider::from_file(path)?),
            None,
            client_config,
        )),
        None => {
            let live = HttpProvider::new(provider.clone())?;
            let cache = match &config.paths.cache {
                Some(path) => Some(Cache::open(path)?),
                None => None,
            };
            Ok(LlmClient::new(Box::new(live), cache, client_config))
        }
    }
}

fn templates(config: &AppConfig) -> Result<TemplateSet, CliError> {
    match &config.prompt.templates_dir {
        Some(dir) => Ok(TemplateSet::from_dir(dir)?),
        None => Ok(TemplateSet::embedded()),
    }
}

pub fn ingest(input: &Path, format: &str, out: &Path) -> Result<(), CliError> {
    let format: CorpusFormat = format.parse().map_err(CliError::Usage)?;
    let corpus = load_corpus(input, format)?;
    write_canonical_jsonl(&corpus, out)?;
    let stats = corpus_stats(&corpus);
    println!(
        "ingested {} ({} split): {} documents, {} events, {} arguments -> {}",
        input.display(),
        corpus.split,
        stats.documents,
        stats.events,
        stats.arguments,
        out.display()
    );
    Ok(())
}

pub fn stats(config: &AppConfig, corpus_flag: Option<&Path>) -> Result<(), CliError> {
    let path = require_path(corpus_flag, config.paths.corpus.as_ref(), "corpus (--corpus or [paths].corpus)")?;
    let corpus = load_canonical_jsonl(&path)?;
    let stats = corpus_stats(&corpus);
    println!("split: {}", corpus.split);
    println!("documents: {}", stats.documents);
    println!("sentences: {}", stats.sentences);
    println!("events: {}", stats.events);
    println!("arguments: {}", stats.arguments);
    if !stats.per_event_type.is_empty() {
        println!("events by type:");
        for (event_type, count) in &stats.per_event_type {
            println!("  {event_type}: {count}");
        }
    }
    Ok(())
}

pub fn balance(
    config: &AppConfig,
    target_per_type: Option<usize>,
    seed: Option<u64>,
    out: &Path,
    plan_path: Option<&Path>,
    max_total: Option<usize>,
) -> Result<(), CliError> {
    let corpus_path = require_path(None, config.paths.corpus.as_ref(), "corpus ([paths].corpus)")?;
    let target_per_type = target_per_type
        .or(config.balance.target_per_type)
        .ok_or_else(|| {
            CliError::Usage("missing target (--target-per-type or [balance].target_per_type)".into())
        })?;
    if target_per_type == 0 {
        return Err(CliError::Usage("--target-per-type must be at least 1".into()));
    }
    let balance_config = BalanceConfig {
        target_per_type,
        seed: seed.or(config.balance.seed).unwrap_or(0),
        max_total: max_total.or(config.balance.max_total),
    };

    let corpus = load_canonical_jsonl(&corpus_path)?;
    let plan = plan_balance(&type_histogram(&corpus), &balance_config);
    let balanced = apply_balance(&corpus, &plan)?;
    write_canonical_jsonl(&balanced, out)?;
    let plan_path = plan_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.with_extension("plan.json"));
    save_plan(&plan, &plan_path)?;
    println!(
        "balanced {} mentions across {} types (seed {}) -> {} (plan: {})",
        plan.total_selected(),
        plan.selections.len(),
        balance_config.seed,
        out.display(),
        plan_path.display()
    );
    Ok(())
}

fn source_label(source: OntologySource) -> &'static str {
    match source {
        OntologySource::Loaded => "loaded",
        OntologySource::Derived => "derived",
        OntologySource::LlmGenerated => "llm-generated",
    }
}

pub fn defs(
    config: &AppConfig,
    generate: bool,
    load: bool,
    replay: Option<&Path>,
    provider: Option<&str>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    if generate == load {
        return Err(CliError::Usage("pass exactly one of --generate or --load".into()));
    }
    if load {
        let path = require_path(out, config.paths.ontology.as_ref(), "ontology (--out or [paths].ontology)")?;
        let ontology = load_ontology(&path)?;
        let roles: usize = ontology.event_types.iter().map(|t| t.roles.len()).sum();
        println!(
            "ontology {}: {} event types, {} roles (source: {})",
            path.display(),
            ontology.len(),
            roles,
            source_label(ontology.source)
        );
        return Ok(());
    }

    let corpus_path = require_path(None, config.paths.corpus.as_ref(), "corpus ([paths].corpus)")?;
    let out_path = require_path(out, config.paths.ontology.as_ref(), "ontology (--out or [paths].ontology)")?;
    let model = provider
        .map(str::to_string)
        .or_else(|| config.provider.model.clone())
        .ok_or_else(|| CliError::Usage("missing model (--provider or [provider].model)".into()))?;
    let provider_config = provider_config(&config.provider, &model)?;
    let client = build_client(config, &provider_config, replay)?;

    let corpus = load_canonical_jsonl(&corpus_path)?;
    let skeleton = derive_skeleton(&corpus);
    let per_type_examples = config.prompt.per_type_examples.unwrap_or(2);
    let outcome = generate_definitions(&skeleton, &corpus, &client, &provider_config, per_type_examples);
    save_ontology(&outcome.ontology, &out_path)?;
    println!(
        "wrote ontology with {} event types -> {}",
        outcome.ontology.len(),
        out_path.display()
    );
    if !outcome.failed.is_empty() {
        let mut message = format!("{} definition request(s) failed:", outcome.failed.len());
        for failure in &outcome.failed {
            message.push_str(&format!("\n  {}: {}", failure.event_type, failure.reason));
        }
        return Err(CliError::Domain(message));
    }
    Ok(())
}

fn failed_documents(records: &[RunRecord]) -> Vec<String> {
    records
        .iter()
        .filter_map(|r| match &r.outcome {
            RunOutcome::Failed { error } => Some(format!("{} [{}]: {error}", r.doc_id, r.stage)),
            _ => None,
        })
        .collect()
}

fn print_stage_summary(label: &str, records: &[RunRecord]) {
    let mut ok = 0;
    let mut failed = 0;
    let mut skipped = 0;
    for record in records {
        match record.outcome {
            RunOutcome::Success => ok += 1,
            RunOutcome::Failed { .. } => failed += 1,
            RunOutcome::Skipped { .. } => skipped += 1,
        }
    }
    println!("{label}: {} documents ({ok} ok, {failed} failed, {skipped} skipped)", records.len());
}

pub fn run(
    config: &AppConfig,
    stage: RunStage,
    style: Option<&str>,
    budget: Option<usize>,
    provider: Option<&str>,
    replay: Option<&Path>,
    run_dir: Option<&Path>,
) -> Result<(), CliError> {
    let corpus_path = require_path(None, config.paths.corpus.as_ref(), "corpus ([paths].corpus)")?;
    let ontology_path = require_path(None, config.paths.ontology.as_ref(), "ontology ([paths].ontology)")?;
    let run_dir_path = require_path(run_dir, config.paths.run_dir.as_ref(), "run directory (--run-dir or [paths].run_dir)")?;
    let style = parse_style(style, config)?;
    let budget = match budget.or(config.prompt.budget_chars) {
        Some(n) => PromptBudget::limited(n),
        None => PromptBudget::unlimited(),
    };
    let model = provider
        .map(str::to_string)
        .or_else(|| config.provider.model.clone())
        .ok_or_else(|| CliError::Usage("missing model (--provider or [provider].model)".into()))?;
    let provider_config = provider_config(&config.provider, &model)?;

    let corpus = load_canonical_jsonl(&corpus_path)?;
    let ontology = load_ontology(&ontology_path)?;
    let templates = templates(config)?;
    let client = build_client(config, &provider_config, replay)?;
    let runner = PipelineRun {
        corpus: &corpus,
        ontology: &ontology,
        client: &client,
        provider: &provider_config,
        templates: &templates,
        style,
        budget,
        in_flight_limit: config.provider.in_flight_limit.unwrap_or(4),
    };
    let run_dir = RunDir::open(&run_dir_path, runner.manifest())?;

    let mut failures = Vec::new();
    match stage {
        RunStage::Detect => {
            let result = runner.run_detection(&run_dir)?;
            print_stage_summary("detection", &result.records);
            failures.extend(failed_documents(&result.records));
        }
        RunStage::Args => {
            let detection_records = run_dir.read_stage(Stage::Detection)?;
            if detection_records.is_empty() {
                return Err(CliError::Domain(format!(
                    "no detection records in {}; run --stage detect first",
                    run_dir_path.display()
                )));
            }
            let detections: BTreeMap<String, Vec<_>> = detection_records
                .iter()
                .map(|r| (r.doc_id.clone(), r.detections.clone()))
                .collect();
            let result = runner.run_arguments(&run_dir, &detections)?;
            print_stage_summary("arguments", &result.records);
            failures.extend(failed_documents(&result.records));
        }
        RunStage::Full => {
            let output = runner.run(&run_dir)?;
            print_stage_summary("detection", &output.detection_records);
            print_stage_summary("arguments", &output.argument_records);
            for warning in &output.warnings {
                eprintln!("warning: {warning}");
            }
            println!("predictions -> {}", run_dir.root().join("predictions.jsonl").display());
            failures.extend(failed_documents(&output.detection_records));
            failures.extend(failed_documents(&output.argument_records));
        }
    }

    if !failures.is_empty() {
        let mut message = format!("{} document(s) failed:", failures.len());
        for failure in &failures {
            message.push_str(&format!("\n  {failure}"));
        }
        return Err(CliError::Domain(message));
    }
    Ok(())
}

/// Read predictions: the prediction JSON-lines format first, falling back to
/// a canonical corpus (self-scoring gold against gold).
fn load_predictions(path: &Path) -> Result<PredictionSet, CliError> {
    match PredictionSet::read_jsonl(path) {
        Ok(predictions) => Ok(predictions),
        Err(prediction_error) => match load_canonical_jsonl(path) {
            Ok(corpus) => Ok(PredictionSet::from_corpus(&corpus)),
            Err(_) => Err(prediction_error.into()),
        },
    }
}

fn scoring_inputs(
    config: &AppConfig,
    gold: Option<&Path>,
    pred: Option<&Path>,
    mode: Option<&str>,
) -> Result<(Corpus, PredictionSet, MatchMode), CliError> {
    let gold_path = require_path(gold, config.paths.corpus.as_ref(), "gold corpus (--gold or [paths].corpus)")?;
    let pred_path = require_path(
        pred,
        config.paths.run_dir.as_ref().map(|d| d.join("predictions.jsonl")).as_ref(),
        "predictions (--pred or [paths].run_dir)",
    )?;
    let mode = parse_mode(mode, config)?;
    let gold_corpus = load_canonical_jsonl(&gold_path)?;
    let predictions = load_predictions(&pred_path)?;
    Ok((gold_corpus, predictions, mode))
}

pub fn score(
    config: &AppConfig,
    gold: Option<&Path>,
    pred: Option<&Path>,
    mode: Option<&str>,
) -> Result<(), CliError> {
    let (gold_corpus, predictions, mode) = scoring_inputs(config, gold, pred, mode)?;
    let report = score_report(&gold_corpus, &predictions, mode);
    print!("{}", report_csv(&report));
    Ok(())
}

pub fn report(
    config: &AppConfig,
    with_reference: bool,
    gold: Option<&Path>,
    pred: Option<&Path>,
    mode: Option<&str>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (gold_corpus, predictions, mode) = scoring_inputs(config, gold, pred, mode)?;
    let report = score_report(&gold_corpus, &predictions, mode);
    let reference = with_reference.then(Scoreboard::embedded);
    let out_dir = out
        .map(Path::to_path_buf)
        .or_else(|| config.paths.run_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let paths = emit_report(&report, reference.as_ref(), &out_dir)?;
    print!("{}", report_markdown(&report, reference.as_ref()));
    eprintln!("wrote {} and {}", paths.csv.display(), paths.markdown.display());
    Ok(())
}
