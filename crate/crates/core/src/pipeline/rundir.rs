//! Run directory: the on-disk audit trail of a pipeline run.
//!
//! Layout:
//!
//! ```text
//! <run_dir>/
//!   manifest.json                  run identity: style, budget, model
//!   records/
//!     detection/<doc>-<hash>.json  one stage-1 record per document
//!     arguments/<doc>-<hash>.json  one stage-2 record per document
//! ```
//!
//! Every record stores the prompt manifest, the raw model reply, the parse
//! report, and the parsed results, so a run can be audited or resumed without
//! touching a provider. Record writes go through a temp file and rename, so
//! a crash never leaves a half-written record behind.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::outparse::{ArgumentRecordOut, DetectionRecord, ParseReport};
use crate::prompting::{PromptBudget, PromptStyle, SectionDisposition};

use super::PipelineError;

/// Which half of the two-stage run a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Detection,
    Arguments,
}

impl Stage {
    fn dir_name(self) -> &'static str {
        match self {
            Stage::Detection => "detection",
            Stage::Arguments => "arguments",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

/// How a (document, stage) pair ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RunOutcome {
    /// The request went out and the reply was parsed (possibly to zero
    /// records; that is still a success).
    Success,
    /// The request or prompt build failed; no provider reply to parse.
    Failed { error: String },
    /// No request was warranted, for example a document with no detections
    /// at stage 2.
    Skipped { reason: String },
}

/// The persisted result of one (document, stage) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub doc_id: String,
    pub stage: Stage,
    pub outcome: RunOutcome,
    /// Section dispositions of the prompt that was sent (empty if none was).
    pub prompt_manifest: Vec<SectionDisposition>,
    /// The model reply, verbatim.
    pub raw_response: String,
    pub parse_report: ParseReport,
    /// Stage-1 results; empty for stage-2 records.
    pub detections: Vec<DetectionRecord>,
    /// Stage-2 results; empty for stage-1 records.
    pub arguments: Vec<ArgumentRecordOut>,
    pub elapsed_ms: u64,
}

impl RunRecord {
    pub fn skipped(doc_id: &str, stage: Stage, reason: &str) -> Self {
        RunRecord {
            doc_id: doc_id.to_string(),
            stage,
            outcome: RunOutcome::Skipped {
                reason: reason.to_string(),
            },
            prompt_manifest: Vec::new(),
            raw_response: String::new(),
            parse_report: ParseReport::default(),
            detections: Vec::new(),
            arguments: Vec::new(),
            elapsed_ms: 0,
        }
    }

    pub fn failed(doc_id: &str, stage: Stage, error: &str, elapsed_ms: u64) -> Self {
        RunRecord {
            doc_id: doc_id.to_string(),
            stage,
            outcome: RunOutcome::Failed {
                error: error.to_string(),
            },
            prompt_manifest: Vec::new(),
            raw_response: String::new(),
            parse_report: ParseReport::default(),
            detections: Vec::new(),
            arguments: Vec::new(),
            elapsed_ms,
        }
    }
}

/// Identity of a run directory. A directory is resumable only by a run with
/// the same style, budget, and model; anything else would stitch together
/// incomparable records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub style: PromptStyle,
    pub budget: PromptBudget,
    pub model_name: String,
}

/// An opened run directory, ready for record reads and atomic writes.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    manifest: RunManifest,
}

/// File-safe form of a doc_id: a readable sanitized stem plus a short
/// content hash so distinct ids never collide after sanitization.
fn record_file_name(doc_id: &str) -> String {
    let stem: String = doc_id
        .chars()
        .take(48)
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    let digest = Sha256::digest(doc_id.as_bytes());
    let hash8: String = digest.iter().take(4).map(|b| format!("{b:02x}")).collect();
    format!("{stem}-{hash8}.json")
}

impl RunDir {
    /// Open or create a run directory for the given identity. An existing
    /// manifest must match exactly; a fresh directory gets one written.
    pub fn open(root: &Path, manifest: RunManifest) -> Result<RunDir, PipelineError> {
        let manifest_path = root.join("manifest.json");
        if manifest_path.exists() {
            let text = fs::read_to_string(&manifest_path).map_err(PipelineError::io_at(root))?;
            let existing: RunManifest =
                serde_json::from_str(&text).map_err(|e| PipelineError::RunDir {
                    detail: format!("manifest.json is not readable: {e}"),
                })?;
            if existing != manifest {
                return Err(PipelineError::RunDir {
                    detail: format!(
                        "run directory was created for model {:?}, style {}, budget {:?}; \
                         refusing to mix in model {:?}, style {}, budget {:?}",
                        existing.model_name,
                        existing.style,
                        existing.budget.max_chars,
                        manifest.model_name,
                        manifest.style,
                        manifest.budget.max_chars
                    ),
                });
            }
        }
        for stage in [Stage::Detection, Stage::Arguments] {
            fs::create_dir_all(root.join("records").join(stage.dir_name()))
                .map_err(PipelineError::io_at(root))?;
        }
        if !manifest_path.exists() {
            let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
            fs::write(&manifest_path, text + "\n").map_err(PipelineError::io_at(root))?;
        }
        Ok(RunDir {
            root: root.to_path_buf(),
            manifest,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    fn record_path(&self, stage: Stage, doc_id: &str) -> PathBuf {
        self.root
            .join("records")
            .join(stage.dir_name())
            .join(record_file_name(doc_id))
    }

    /// The stored record for a (document, stage) pair, if one exists. A
    /// corrupt record file is an error, not a silent cache miss: resuming
    /// over it would quietly drop audit history.
    pub fn read_record(&self, stage: Stage, doc_id: &str) -> Result<Option<RunRecord>, PipelineError> {
        let path = self.record_path(stage, doc_id);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(PipelineError::Io { path, source: e }),
        };
        let record: RunRecord = serde_json::from_str(&text).map_err(|e| PipelineError::RunDir {
            detail: format!("record {} is corrupt: {e}", path.display()),
        })?;
        Ok(Some(record))
    }

    /// Persist a record atomically: write a temp file, then rename it into
    /// place. Rename within one directory replaces any previous record.
    pub fn write_record(&self, record: &RunRecord) -> Result<(), PipelineError> {
        let path = self.record_path(record.stage, &record.doc_id);
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(record).expect("record serializes");
        fs::write(&tmp, text + "\n").map_err(PipelineError::io_at(&self.root))?;
        fs::rename(&tmp, &path).map_err(PipelineError::io_at(&self.root))?;
        Ok(())
    }

    /// All stored records for one stage, sorted by doc_id.
    pub fn read_stage(&self, stage: Stage) -> Result<Vec<RunRecord>, PipelineError> {
        let dir = self.root.join("records").join(stage.dir_name());
        let mut records = Vec::new();
        for entry in fs::read_dir(&dir).map_err(PipelineError::io_at(&dir))? {
            let path = entry.map_err(PipelineError::io_at(&dir))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(PipelineError::io_at(&path))?;
            let record: RunRecord =
                serde_json::from_str(&text).map_err(|e| PipelineError::RunDir {
                    detail: format!("record {} is corrupt: {e}", path.display()),
                })?;
            records.push(record);
        }
        records.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        Ok(records)
    }
}
