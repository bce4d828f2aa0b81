//! Two-stage run orchestration: detection, then argument extraction.
//!
//! A run walks a corpus document by document. Stage 1 asks the model which
//! events a document contains; stage 2, for documents with at least one
//! detection, asks for the arguments of exactly those events, with the
//! stage-1 (event type, trigger) pairs embedded in the prompt. Every prompt,
//! raw reply, and parse result is persisted to a [`rundir::RunDir`], so runs
//! are auditable, are resumable without repeating provider calls, and can be
//! replayed offline.
//!
//! Failures stay local: a document whose prompt cannot be built or whose
//! request fails gets a failure record and the run moves on. The only
//! run-level errors are an unusable run directory and unreadable inputs.

pub mod predictions;
pub mod rundir;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::llm::{LlmClient, LlmRequest, ProviderConfig};
use crate::ontology::Ontology;
use crate::outparse::{parse_arguments, parse_detection, ArgumentRecordOut, DetectionRecord};
use crate::prompting::{
    build_argument_prompt, build_detection_prompt, PromptBudget, PromptStyle, TemplateSet,
};

pub use predictions::{
    assemble_predictions, PredictedArgument, PredictedDoc, PredictedEvent, PredictionSet,
};
pub use rundir::{RunDir, RunManifest, RunOutcome, RunRecord, Stage};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("pipeline io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("run directory problem: {detail}")]
    RunDir { detail: String },
    #[error("malformed prediction file: {detail}")]
    Predictions { detail: String },
}

impl PipelineError {
    pub(crate) fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
        move |source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Everything a run needs, as a serializable configuration. Paths are
/// resolved by the caller; the library works on loaded values via
/// [`PipelineRun`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub provider: ProviderConfig,
    pub style: PromptStyle,
    pub budget: PromptBudget,
    pub ontology_path: PathBuf,
    pub corpus_path: PathBuf,
    pub run_dir: PathBuf,
    pub in_flight_limit: usize,
}

/// The per-document results of one stage plus its run records.
#[derive(Debug, Clone)]
pub struct StageResult<T> {
    /// Every corpus document has an entry; failed or skipped documents map
    /// to an empty list.
    pub per_doc: BTreeMap<String, Vec<T>>,
    /// One record per document, sorted by doc_id.
    pub records: Vec<RunRecord>,
}

/// The complete output of a two-stage run.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub predictions: PredictionSet,
    pub detection_records: Vec<RunRecord>,
    pub argument_records: Vec<RunRecord>,
    /// Assembly notes, e.g. argument records whose anchor disappeared.
    pub warnings: Vec<String>,
}

/// A configured run over loaded inputs. Borrowed state only; the runner
/// itself is cheap to build.
pub struct PipelineRun<'a> {
    pub corpus: &'a Corpus,
    pub ontology: &'a Ontology,
    pub client: &'a LlmClient,
    pub provider: &'a ProviderConfig,
    pub templates: &'a TemplateSet,
    pub style: PromptStyle,
    pub budget: PromptBudget,
    /// Documents processed concurrently. Clamped to at least 1.
    pub in_flight_limit: usize,
}

impl PipelineRun<'_> {
    /// The manifest this run stamps onto its run directory.
    pub fn manifest(&self) -> RunManifest {
        RunManifest {
            style: self.style,
            budget: self.budget,
            model_name: self.provider.model_name.clone(),
        }
    }

    /// Stage 1 over the whole corpus: one detection request per document,
    /// resuming from any records already present in `run_dir`.
    pub fn run_detection(&self, run_dir: &RunDir) -> Result<StageResult<DetectionRecord>, PipelineError> {
        let records = self.run_stage(run_dir, Stage::Detection, |doc| self.detect_one(doc))?;
        let per_doc = records
            .iter()
            .map(|r| (r.doc_id.clone(), r.detections.clone()))
            .collect();
        Ok(StageResult { per_doc, records })
    }

    /// Stage 2 over the whole corpus: one argument request per document with
    /// at least one detection; the rest are recorded as skipped.
    pub fn run_arguments(
        &self,
        run_dir: &RunDir,
        detections: &BTreeMap<String, Vec<DetectionRecord>>,
    ) -> Result<StageResult<ArgumentRecordOut>, PipelineError> {
        let records = self.run_stage(run_dir, Stage::Arguments, |doc| {
            let detected = detections
                .get(&doc.doc_id)
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            self.extract_one(doc, detected)
        })?;
        let per_doc = records
            .iter()
            .map(|r| (r.doc_id.clone(), r.arguments.clone()))
            .collect();
        Ok(StageResult { per_doc, records })
    }

    /// Both stages plus assembly. Writes `predictions.jsonl` into the run
    /// directory and returns the full output.
    pub fn run(&self, run_dir: &RunDir) -> Result<PipelineOutput, PipelineError> {
        let detection = self.run_detection(run_dir)?;
        let arguments = self.run_arguments(run_dir, &detection.per_doc)?;
        let (predictions, warnings) =
            assemble_predictions(&detection.per_doc, &arguments.per_doc);
        predictions.write_jsonl(&run_dir.root().join("predictions.jsonl"))?;
        Ok(PipelineOutput {
            predictions,
            detection_records: detection.records,
            argument_records: arguments.records,
            warnings,
        })
    }

    /// Worker pool over the corpus. Existing records are reused verbatim
    /// (resume); fresh work is persisted before it counts. Worker-local
    /// failures become records; only run-directory failures abort.
    fn run_stage<F>(&self, run_dir: &RunDir, stage: Stage, work: F) -> Result<Vec<RunRecord>, PipelineError>
    where
        F: Fn(&Document) -> RunRecord + Sync,
    {
        let docs = &self.corpus.documents;
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<RunRecord>> = Mutex::new(Vec::with_capacity(docs.len()));
        let failure: Mutex<Option<PipelineError>> = Mutex::new(None);
        let workers = self.in_flight_limit.max(1).min(docs.len().max(1));
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if failure.lock().expect("failure lock").is_some() {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(doc) = docs.get(i) else {
                        break;
                    };
                    let record = match run_dir.read_record(stage, &doc.doc_id) {
                        Ok(Some(existing)) => existing,
                        Ok(None) => {
                            let record = work(doc);
                            if let Err(e) = run_dir.write_record(&record) {
                                failure.lock().expect("failure lock").get_or_insert(e);
                                break;
                            }
                            record
                        }
                        Err(e) => {
                            failure.lock().expect("failure lock").get_or_insert(e);
                            break;
                        }
                    };
                    results.lock().expect("results lock").push(record);
                });
            }
        });
        if let Some(e) = failure.into_inner().expect("failure lock") {
            return Err(e);
        }
        let mut records = results.into_inner().expect("results lock");
        records.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        Ok(records)
    }

    fn detect_one(&self, doc: &Document) -> RunRecord {
        let started = Instant::now();
        let bundle = match build_detection_prompt(doc, self.ontology, self.style, &self.budget, self.templates) {
            Ok(bundle) => bundle,
            Err(e) => {
                return RunRecord::failed(
                    &doc.doc_id,
                    Stage::Detection,
                    &format!("prompt build failed: {e}"),
                    elapsed_ms(started),
                )
            }
        };
        let request = LlmRequest::new(self.provider, &bundle.system_text, &bundle.user_text);
        match self.client.complete(&request) {
            Ok(response) => {
                let (detections, parse_report) =
                    parse_detection(&response.text, self.ontology, doc);
                RunRecord {
                    doc_id: doc.doc_id.clone(),
                    stage: Stage::Detection,
                    outcome: RunOutcome::Success,
                    prompt_manifest: bundle.manifest,
                    raw_response: response.text,
                    parse_report,
                    detections,
                    arguments: Vec::new(),
                    elapsed_ms: elapsed_ms(started),
                }
            }
            Err(e) => {
                let mut record = RunRecord::failed(
                    &doc.doc_id,
                    Stage::Detection,
                    &format!("request failed: {e}"),
                    elapsed_ms(started),
                );
                record.prompt_manifest = bundle.manifest;
                record
            }
        }
    }

    fn extract_one(&self, doc: &Document, detected: &[DetectionRecord]) -> RunRecord {
        if detected.is_empty() {
            return RunRecord::skipped(
                &doc.doc_id,
                Stage::Arguments,
                "no detections from stage 1",
            );
        }
        let started = Instant::now();
        let bundle = match build_argument_prompt(
            doc,
            detected,
            self.ontology,
            self.style,
            &self.budget,
            self.templates,
        ) {
            Ok(bundle) => bundle,
            Err(e) => {
                return RunRecord::failed(
                    &doc.doc_id,
                    Stage::Arguments,
                    &format!("prompt build failed: {e}"),
                    elapsed_ms(started),
                )
            }
        };
        let request = LlmRequest::new(self.provider, &bundle.system_text, &bundle.user_text);
        match self.client.complete(&request) {
            Ok(response) => {
                let (arguments, parse_report) =
                    parse_arguments(&response.text, self.ontology, doc, detected);
                RunRecord {
                    doc_id: doc.doc_id.clone(),
                    stage: Stage::Arguments,
                    outcome: RunOutcome::Success,
                    prompt_manifest: bundle.manifest,
                    raw_response: response.text,
                    parse_report,
                    detections: Vec::new(),
                    arguments,
                    elapsed_ms: elapsed_ms(started),
                }
            }
            Err(e) => {
                let mut record = RunRecord::failed(
                    &doc.doc_id,
                    Stage::Arguments,
                    &format!("request failed: {e}"),
                    elapsed_ms(started),
                );
                record.prompt_manifest = bundle.manifest;
                record
            }
        }
    }
}

fn elapsed_ms(started: Instant) -> u64 {
    u64::try_from(started.elapsed().as_millis()).unwrap_or(u64::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::fixture_doc;
    use crate::corpus::Split;
    use crate::llm::{registry, request_key, ClientConfig, ReplayProvider};
    use crate::prompting::tests::fixture_ontology;
    use tempfile::tempdir;

    const MOVEMENT: &str = "Movement.Transportation.Unspecified";
    const CONFLICT: &str = "Conflict.Attack.Unspecified";

    fn provider_config() -> ProviderConfig {
        registry::provider_for_model("gpt-4-turbo").expect("known model")
    }

    fn replay_client(entries: Vec<(String, String)>) -> LlmClient {
        LlmClient::new(
            Box::new(ReplayProvider::from_entries(entries)),
            None,
            ClientConfig::default(),
        )
    }

    fn runner<'a>(
        corpus: &'a Corpus,
        ontology: &'a Ontology,
        client: &'a LlmClient,
        provider: &'a ProviderConfig,
        templates: &'a TemplateSet,
    ) -> PipelineRun<'a> {
        PipelineRun {
            corpus,
            ontology,
            client,
            provider,
            templates,
            style: PromptStyle::Ddee,
            budget: PromptBudget::unlimited(),
            in_flight_limit: 3,
        }
    }

    /// The request key the pipeline will use for a stage-1 call on `doc`.
    fn detection_key(doc: &Document, ontology: &Ontology, templates: &TemplateSet, provider: &ProviderConfig) -> String {
        let bundle = build_detection_prompt(
            doc,
            ontology,
            PromptStyle::Ddee,
            &PromptBudget::unlimited(),
            templates,
        )
        .unwrap();
        request_key(
            &provider.model_name,
            provider.temperature,
            &bundle.system_text,
            &bundle.user_text,
        )
    }

    fn argument_key(
        doc: &Document,
        detected: &[DetectionRecord],
        ontology: &Ontology,
        templates: &TemplateSet,
        provider: &ProviderConfig,
    ) -> String {
        let bundle = build_argument_prompt(
            doc,
            detected,
            ontology,
            PromptStyle::Ddee,
            &PromptBudget::unlimited(),
            templates,
        )
        .unwrap();
        request_key(
            &provider.model_name,
            provider.temperature,
            &bundle.system_text,
            &bundle.user_text,
        )
    }

    fn d1_detection_reply() -> String {
        format!(
            r#"[{{"doc_id": "d1", "event_type": "{MOVEMENT}", "trigger": "was driven"}},
                {{"doc_id": "d1", "event_type": "{CONFLICT}", "trigger": "hit"}}]"#
        )
    }

    fn d1_argument_reply() -> String {
        format!(
            r#"[{{"event_type": "{MOVEMENT}", "trigger": "was driven",
                 "arguments": [{{"role": "Vehicle", "text": "truck"}}]}},
                {{"event_type": "{CONFLICT}", "trigger": "hit",
                 "arguments": [{{"role": "Target", "text": "the convoy"}},
                               {{"role": "Instrument", "text": "rockets"}}]}}]"#
        )
    }

    /// d1 answers cleanly, d2 answers garbage: the garbage stays local to d2.
    #[test]
    fn mixed_corpus_isolates_the_garbage_document() {
        let corpus = Corpus::new(Split::Dev, vec![fixture_doc("d1"), fixture_doc("d2")]);
        let ontology = fixture_ontology();
        let templates = TemplateSet::embedded();
        let provider = provider_config();
        let client = replay_client(vec![
            (
                detection_key(&corpus.documents[0], &ontology, &templates, &provider),
                d1_detection_reply(),
            ),
            (
                detection_key(&corpus.documents[1], &ontology, &templates, &provider),
                "I could not find any events, sorry.".to_string(),
            ),
        ]);
        let run = runner(&corpus, &ontology, &client, &provider, &templates);
        let dir = tempdir().unwrap();
        let run_dir = RunDir::open(dir.path(), run.manifest()).unwrap();

        let result = run.run_detection(&run_dir).unwrap();
        assert_eq!(result.per_doc["d1"].len(), 2);
        assert!(result.per_doc["d2"].is_empty());
        let d2 = result.records.iter().find(|r| r.doc_id == "d2").unwrap();
        assert_eq!(d2.outcome, RunOutcome::Success, "a parsed-to-nothing reply is not a failure");
        assert_eq!(d2.parse_report.dropped.len(), 1);
        assert_eq!(
            d2.parse_report.dropped[0].reason,
            crate::outparse::ReasonCode::Unparseable
        );
    }

    #[test]
    fn empty_corpus_makes_no_requests() {
        let corpus = Corpus::new(Split::Dev, Vec::new());
        let ontology = fixture_ontology();
        let templates = TemplateSet::embedded();
        let provider = provider_config();
        // an empty replay store errors on any request, so success proves none
        let client = replay_client(Vec::new());
        let run = runner(&corpus, &ontology, &client, &provider, &templates);
        let dir = tempdir().unwrap();
        let run_dir = RunDir::open(dir.path(), run.manifest()).unwrap();
        let output = run.run(&run_dir).unwrap();
        assert!(output.predictions.is_empty());
        assert!(output.detection_records.is_empty());
        assert!(output.argument_records.is_empty());
    }

    #[test]
    fn full_run_produces_the_expected_predictions() {
        let corpus = Corpus::new(Split::Dev, vec![fixture_doc("d1")]);
        let ontology = fixture_ontology();
        let templates = TemplateSet::embedded();
        let provider = provider_config();
        let doc = &corpus.documents[0];

        let (detected, _) = parse_detection(&d1_detection_reply(), &ontology, doc);
        let client = replay_client(vec![
            (
                detection_key(doc, &ontology, &templates, &provider),
                d1_detection_reply(),
            ),
            (
                argument_key(doc, &detected, &ontology, &templates, &provider),
                d1_argument_reply(),
            ),
        ]);
        let run = runner(&corpus, &ontology, &client, &provider, &templates);
        let dir = tempdir().unwrap();
        let run_dir = RunDir::open(dir.path(), run.manifest()).unwrap();
        let output = run.run(&run_dir).unwrap();

        assert!(output.warnings.is_empty());
        let predicted = &output.predictions.docs["d1"];
        assert_eq!(predicted.events.len(), 2);
        assert_eq!(predicted.events[0].arguments.len(), 1);
        assert_eq!(predicted.events[1].arguments.len(), 2);
        let (events, args) = predicted.grounded_mentions();
        assert_eq!(events.len(), 2);
        assert_eq!(args.len(), 3);

        // the run directory carries the full audit trail plus predictions
        assert!(dir.path().join("predictions.jsonl").is_file());
        let reread = PredictionSet::read_jsonl(&dir.path().join("predictions.jsonl")).unwrap();
        assert_eq!(reread, output.predictions);
    }

    #[test]
    fn zero_detection_documents_are_skipped_at_stage_two() {
        let corpus = Corpus::new(Split::Dev, vec![fixture_doc("d1")]);
        let ontology = fixture_ontology();
        let templates = TemplateSet::embedded();
        let provider = provider_config();
        let client = replay_client(vec![(
            detection_key(&corpus.documents[0], &ontology, &templates, &provider),
            "[]".to_string(),
        )]);
        let run = runner(&corpus, &ontology, &client, &provider, &templates);
        let dir = tempdir().unwrap();
        let run_dir = RunDir::open(dir.path(), run.manifest()).unwrap();
        let output = run.run(&run_dir).unwrap();

        let record = &output.argument_records[0];
        assert!(matches!(record.outcome, RunOutcome::Skipped { .. }));
        assert!(output.predictions.docs["d1"].events.is_empty());
    }

    #[test]
    fn stage_two_prompts_embed_stage_one_pairs_verbatim() {
        let corpus = Corpus::new(Split::Dev, vec![fixture_doc("d1")]);
        let ontology = fixture_ontology();
        let templates = TemplateSet::embedded();
        let provider = provider_config();
        let doc = &corpus.documents[0];
        let (detected, _) = parse_detection(&d1_detection_reply(), &ontology, doc);
        let client = replay_client(vec![
            (
                detection_key(doc, &ontology, &templates, &provider),
                d1_detection_reply(),
            ),
            (
                argument_key(doc, &detected, &ontology, &templates, &provider),
                d1_argument_reply(),
            ),
        ]);
        let run = runner(&corpus, &ontology, &client, &provider, &templates);
        let dir = tempdir().unwrap();
        let run_dir = RunDir::open(dir.path(), run.manifest()).unwrap();
        let output = run.run(&run_dir).unwrap();

        // history propagation: every stage-2 pair exists in stage-1 output
        for record in &output.argument_records {
            let stage_one: Vec<(String, String)> = output
                .detection_records
                .iter()
                .find(|r| r.doc_id == record.doc_id)
                .map(|r| {
                    r.detections
                        .iter()
                        .map(|d| (d.event_type.clone(), d.trigger_text.clone()))
                        .collect()
                })
                .unwrap();
            for arg in &record.arguments {
                assert!(
                    stage_one.contains(&(arg.event_type.clone(), arg.trigger_text.clone())),
                    "stage-2 pair ({}, {}) missing from stage-1 history",
                    arg.event_type,
                    arg.trigger_text
                );
            }
        }
        // and the reply that produced them anchored both fixture events
        assert_eq!(output.argument_records[0].arguments.len(), 3);
    }

    /// Rerunning over a populated run directory touches no provider: a
    /// client with an empty replay store would fail every request it is
    /// actually asked to make.
    #[test]
    fn resume_makes_zero_provider_calls_and_reproduces_the_output() {
        let corpus = Corpus::new(Split::Dev, vec![fixture_doc("d1"), fixture_doc("d2")]);
        let ontology = fixture_ontology();
        let templates = TemplateSet::embedded();
        let provider = provider_config();
        let d1 = &corpus.documents[0];
        let (detected, _) = parse_detection(&d1_detection_reply(), &ontology, d1);
        let client = replay_client(vec![
            (
                detection_key(d1, &ontology, &templates, &provider),
                d1_detection_reply(),
            ),
            (
                detection_key(&corpus.documents[1], &ontology, &templates, &provider),
                "[]".to_string(),
            ),
            (
                argument_key(d1, &detected, &ontology, &templates, &provider),
                d1_argument_reply(),
            ),
        ]);
        let dir = tempdir().unwrap();
        let first = {
            let run = runner(&corpus, &ontology, &client, &provider, &templates);
            let run_dir = RunDir::open(dir.path(), run.manifest()).unwrap();
            run.run(&run_dir).unwrap()
        };

        let empty_client = replay_client(Vec::new());
        let run = runner(&corpus, &ontology, &empty_client, &provider, &templates);
        let run_dir = RunDir::open(dir.path(), run.manifest()).unwrap();
        let second = run.run(&run_dir).unwrap();

        assert_eq!(second.predictions, first.predictions);
        assert_eq!(second.detection_records, first.detection_records);
        assert_eq!(second.argument_records, first.argument_records);
        assert!(second
            .detection_records
            .iter()
            .chain(&second.argument_records)
            .all(|r| !matches!(r.outcome, RunOutcome::Failed { .. })));
    }

    /// A document whose replay key is missing fails alone; the others
    /// complete and its failure is recorded for audit.
    #[test]
    fn provider_failure_stays_per_document() {
        let corpus = Corpus::new(Split::Dev, vec![fixture_doc("d1"), fixture_doc("d2")]);
        let ontology = fixture_ontology();
        let templates = TemplateSet::embedded();
        let provider = provider_config();
        let client = replay_client(vec![(
            detection_key(&corpus.documents[0], &ontology, &templates, &provider),
            d1_detection_reply(),
        )]);
        let run = runner(&corpus, &ontology, &client, &provider, &templates);
        let dir = tempdir().unwrap();
        let run_dir = RunDir::open(dir.path(), run.manifest()).unwrap();
        let result = run.run_detection(&run_dir).unwrap();

        assert_eq!(result.per_doc["d1"].len(), 2);
        let d2 = result.records.iter().find(|r| r.doc_id == "d2").unwrap();
        match &d2.outcome {
            RunOutcome::Failed { error } => assert!(error.contains("replay"), "{error}"),
            other => panic!("expected failure, got {other:?}"),
        }
        // the failed record still resumes: no retry storm on rerun
        let again = run.run_detection(&run_dir).unwrap();
        assert_eq!(again.records, result.records);
    }
}
