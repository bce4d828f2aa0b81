//! Canonical data model for documents and gold annotations.
//!
//! A [`Corpus`] is an ordered list of [`Document`]s; each document carries its
//! full text, sentence boundaries, gold [`EventMention`]s and
//! [`ArgumentMention`]s. All spans are half-open char-offset ranges into the
//! owning document's text, and every span's `text` field must equal the
//! substring it indexes; the loaders enforce this for 100% of mentions.

mod format;
mod wikievents;

pub use format::{load_canonical_jsonl, parse_canonical_jsonl, to_canonical_jsonl, write_canonical_jsonl};
pub use wikievents::{load_wikievents_jsonl, MappingDescriptor};

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::Ontology;
use crate::text;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {detail}")]
    MalformedLine { line: usize, detail: String },
    #[error("document {doc_id}: {detail}")]
    BadDocument { doc_id: String, detail: String },
    #[error("duplicate doc_id {0}")]
    DuplicateDocId(String),
}

/// A half-open char-offset span with its surface string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextSpan {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl TextSpan {
    pub fn new(start: usize, end: usize, text: impl Into<String>) -> Self {
        TextSpan {
            start,
            end,
            text: text.into(),
        }
    }

    /// Build a span from offsets, recovering the surface string from `doc_text`.
    pub fn from_offsets(doc_text: &str, start: usize, end: usize) -> Option<Self> {
        let surface = text::char_slice(doc_text, start, end)?;
        Some(TextSpan::new(start, end, surface))
    }

    /// The span invariants against its owning document text.
    pub fn check(&self, doc_text: &str) -> Result<(), String> {
        if self.start >= self.end {
            return Err(format!("span [{}, {}) is empty or inverted", self.start, self.end));
        }
        match text::char_slice(doc_text, self.start, self.end) {
            Some(s) if s == self.text => Ok(()),
            Some(s) => Err(format!(
                "span text {:?} does not match document substring {:?} at [{}, {})",
                self.text, s, self.start, self.end
            )),
            None => Err(format!(
                "span [{}, {}) lies outside the document text (len {})",
                self.start,
                self.end,
                text::char_len(doc_text)
            )),
        }
    }
}

/// An event anchored by its trigger span; the unit of Trig-C scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventMention {
    pub event_type: String,
    pub trigger: TextSpan,
}

/// A role-typed span attached to the event at `event_index`; the unit of
/// Arg-C scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgumentMention {
    pub role: String,
    pub span: TextSpan,
    pub event_index: usize,
}

/// One corpus article with text, sentence boundaries, and gold mentions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub sentence_bounds: Vec<TextSpan>,
    pub events: Vec<EventMention>,
    pub arguments: Vec<ArgumentMention>,
    /// Source doc_id when this document is a balancer-made copy.
    pub provenance: Option<String>,
}

impl Document {
    /// All invariant violations for this document. Empty means well-formed.
    pub fn integrity_errors(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.doc_id.is_empty() {
            errors.push("doc_id is empty".to_string());
        }
        let mut prev_end = 0usize;
        for (i, sent) in self.sentence_bounds.iter().enumerate() {
            if let Err(e) = sent.check(&self.text) {
                errors.push(format!("sentence {i}: {e}"));
            } else if sent.start < prev_end {
                errors.push(format!(
                    "sentence {i} starting at {} overlaps or precedes the previous sentence ending at {prev_end}",
                    sent.start
                ));
            }
            prev_end = prev_end.max(sent.end);
        }
        for (i, ev) in self.events.iter().enumerate() {
            if ev.event_type.is_empty() {
                errors.push(format!("event {i}: empty event_type"));
            }
            if let Err(e) = ev.trigger.check(&self.text) {
                errors.push(format!("event {i} trigger: {e}"));
            }
        }
        for (i, arg) in self.arguments.iter().enumerate() {
            if arg.role.is_empty() {
                errors.push(format!("argument {i}: empty role"));
            }
            if arg.event_index >= self.events.len() {
                errors.push(format!(
                    "argument {i}: event_index {} addresses no event (document has {})",
                    arg.event_index,
                    self.events.len()
                ));
            }
            if let Err(e) = arg.span.check(&self.text) {
                errors.push(format!("argument {i} span: {e}"));
            }
        }
        errors
    }
}

/// Which split a corpus came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
    Custom,
}

impl Split {
    /// Infer the split from a file stem: `train.jsonl` -> Train, etc.
    pub fn from_path(path: &Path) -> Split {
        match path
            .file_stem()
            .and_then(|s| s.to_str())
            .map(|s| s.to_ascii_lowercase())
            .as_deref()
        {
            Some("train") => Split::Train,
            Some("dev") => Split::Dev,
            Some("test") => Split::Test,
            _ => Split::Custom,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
            Split::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// An ordered set of documents from one split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub split: Split,
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn new(split: Split, documents: Vec<Document>) -> Self {
        Corpus { split, documents }
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    /// Verify document integrity and doc_id uniqueness.
    pub fn check(&self) -> Result<(), CorpusError> {
        let mut seen = std::collections::BTreeSet::new();
        for doc in &self.documents {
            if !seen.insert(doc.doc_id.clone()) {
                return Err(CorpusError::DuplicateDocId(doc.doc_id.clone()));
            }
            let errors = doc.integrity_errors();
            if !errors.is_empty() {
                return Err(CorpusError::BadDocument {
                    doc_id: doc.doc_id.clone(),
                    detail: errors.join("; "),
                });
            }
        }
        Ok(())
    }
}

/// Input formats understood by [`load_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    WikieventsJsonl,
    CanonicalJsonl,
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "wikievents-jsonl" => Ok(CorpusFormat::WikieventsJsonl),
            "canonical-jsonl" => Ok(CorpusFormat::CanonicalJsonl),
            other => Err(format!(
                "unknown corpus format {other:?} (expected wikievents-jsonl or canonical-jsonl)"
            )),
        }
    }
}

/// Load a corpus from a JSON-lines file in the given format.
///
/// The split is inferred from the file stem (`train`/`dev`/`test`, otherwise
/// custom). Every document is integrity-checked on load; token-index spans in
/// the source format are converted to char offsets.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    match format {
        CorpusFormat::CanonicalJsonl => load_canonical_jsonl(path),
        CorpusFormat::WikieventsJsonl => load_wikievents_jsonl(path, &MappingDescriptor::default()),
    }
}

/// One mention-level finding from [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub doc_id: String,
    pub kind: FindingKind,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingKind {
    UnknownEventType,
    UnknownRole,
    SpanMismatch,
}

/// Everything [`validate`] found; an empty list means a clean corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Check every mention against the ontology (unknown event types, roles
/// invalid for their event type) and re-check span/text agreement. The corpus
/// is never modified; all findings are report entries.
pub fn validate(corpus: &Corpus, ontology: &Ontology) -> ValidationReport {
    let mut findings = Vec::new();
    for doc in &corpus.documents {
        for (i, ev) in doc.events.iter().enumerate() {
            if ontology.event_type(&ev.event_type).is_none() {
                findings.push(Finding {
                    doc_id: doc.doc_id.clone(),
                    kind: FindingKind::UnknownEventType,
                    detail: format!("event {i}: type {:?} not in ontology", ev.event_type),
                });
            }
            if let Err(e) = ev.trigger.check(&doc.text) {
                findings.push(Finding {
                    doc_id: doc.doc_id.clone(),
                    kind: FindingKind::SpanMismatch,
                    detail: format!("event {i} trigger: {e}"),
                });
            }
        }
        for (i, arg) in doc.arguments.iter().enumerate() {
            let owner = doc.events.get(arg.event_index);
            match owner {
                Some(ev) => {
                    let known_role = ontology
                        .event_type(&ev.event_type)
                        .map(|t| t.role(&arg.role).is_some())
                        .unwrap_or(false);
                    if !known_role {
                        findings.push(Finding {
                            doc_id: doc.doc_id.clone(),
                            kind: FindingKind::UnknownRole,
                            detail: format!(
                                "argument {i}: role {:?} not defined for event type {:?}",
                                arg.role, ev.event_type
                            ),
                        });
                    }
                }
                None => findings.push(Finding {
                    doc_id: doc.doc_id.clone(),
                    kind: FindingKind::UnknownRole,
                    detail: format!("argument {i}: event_index {} dangles", arg.event_index),
                }),
            }
            if let Err(e) = arg.span.check(&doc.text) {
                findings.push(Finding {
                    doc_id: doc.doc_id.clone(),
                    kind: FindingKind::SpanMismatch,
                    detail: format!("argument {i} span: {e}"),
                });
            }
        }
    }
    ValidationReport { findings }
}

/// Corpus-level counts plus a per-event-type histogram.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsTable {
    pub documents: usize,
    pub sentences: usize,
    pub events: usize,
    pub arguments: usize,
    pub per_event_type: BTreeMap<String, usize>,
}

/// Count documents, sentences, event mentions, and argument mentions.
pub fn corpus_stats(corpus: &Corpus) -> StatsTable {
    let mut stats = StatsTable {
        documents: corpus.documents.len(),
        ..StatsTable::default()
    };
    for doc in &corpus.documents {
        stats.sentences += doc.sentence_bounds.len();
        stats.events += doc.events.len();
        stats.arguments += doc.arguments.len();
        for ev in &doc.events {
            *stats.per_event_type.entry(ev.event_type.clone()).or_insert(0) += 1;
        }
    }
    stats
}
