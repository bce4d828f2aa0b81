//! Structured-output parsing and grounding for model replies.
//!
//! Stage replies arrive as almost-JSON text. This module repairs and parses
//! them ([`repair`]), normalizes type and role names against the ontology,
//! anchors stage-2 records to their stage-1 detections, and grounds every
//! surface string to a character span in the source document. Nothing here
//! trusts the model: unknown names, unanchored events, and junk elements are
//! dropped with a reason code, and malformed input can never panic.
//!
//! Grounding is normalized search: case differences and whitespace runs do
//! not prevent a match, and the recorded span always carries the document's
//! own surface text.

pub mod repair;

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{Document, TextSpan};
use crate::ontology::Ontology;
use crate::text::NormalizedText;

/// Why a record was dropped during parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReasonCode {
    /// The event type resolves to nothing in the ontology.
    UnknownType,
    /// The role does not belong to the record's event type.
    UnknownRole,
    /// A stage-2 record's (event type, trigger) pair matches no detection.
    UnanchoredEvent,
    /// Not interpretable as a record even after repairs.
    Unparseable,
}

impl fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ReasonCode::UnknownType => "unknown-type",
            ReasonCode::UnknownRole => "unknown-role",
            ReasonCode::UnanchoredEvent => "unanchored-event",
            ReasonCode::Unparseable => "unparseable",
        };
        f.write_str(s)
    }
}

/// A record that did not survive parsing, kept for the audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedRecord {
    /// The raw element as the model produced it (or a text excerpt when the
    /// whole reply was unusable).
    pub record: Value,
    pub reason: ReasonCode,
}

/// What happened while parsing one model reply.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseReport {
    /// Names of repair-ladder steps that changed the text, in order.
    pub repairs_applied: Vec<String>,
    pub dropped: Vec<DroppedRecord>,
    pub warnings: Vec<String>,
}

impl ParseReport {
    fn drop_record(&mut self, record: Value, reason: ReasonCode) {
        self.dropped.push(DroppedRecord { record, reason });
    }
}

/// One event detection from stage 1, normalized and grounded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub doc_id: String,
    /// Canonical ontology name, after case-insensitive resolution.
    pub event_type: String,
    /// Document surface text when grounded, the model's string otherwise.
    pub trigger_text: String,
    pub trigger_span: Option<TextSpan>,
    pub grounded: bool,
}

impl DetectionRecord {
    /// A detection with no span, as if grounding had found nothing. Handy
    /// for building stage-2 inputs in tests.
    pub fn ungrounded(doc_id: &str, event_type: &str, trigger_text: &str) -> Self {
        DetectionRecord {
            doc_id: doc_id.to_string(),
            event_type: event_type.to_string(),
            trigger_text: trigger_text.to_string(),
            trigger_span: None,
            grounded: false,
        }
    }
}

/// One extracted argument from stage 2, anchored to a detection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgumentRecordOut {
    pub event_type: String,
    /// The anchoring detection's trigger text, verbatim.
    pub trigger_text: String,
    /// Canonical role name for the event type.
    pub role: String,
    /// Document surface text when grounded, the model's string otherwise.
    pub arg_text: String,
    pub arg_span: Option<TextSpan>,
    pub grounded: bool,
}

/// Locate `fragment` in the document, tolerating case and whitespace
/// differences. With `near` set, the occurrence whose start is closest to
/// `near.start` wins; ties go to the earlier occurrence. Without it, the
/// first occurrence wins. Returns the span with the document's own surface
/// text, or `None` when the fragment does not occur.
pub fn ground(fragment: &str, doc: &Document, near: Option<&TextSpan>) -> Option<TextSpan> {
    let haystack = NormalizedText::new(&doc.text);
    let occurrences = haystack.find_all(fragment);
    let (start, end) = match near {
        Some(anchor) => *occurrences.iter().min_by_key(|(s, _)| {
            let distance = s.abs_diff(anchor.start);
            (distance, *s)
        })?,
        None => *occurrences.first()?,
    };
    TextSpan::from_offsets(&doc.text, start, end)
}

fn string_field(obj: &serde_json::Map<String, Value>, key: &str) -> Option<String> {
    obj.get(key).and_then(Value::as_str).map(str::to_string)
}

/// Excerpt of an unusable reply, kept small enough for run records.
fn excerpt(raw: &str) -> Value {
    const LIMIT: usize = 200;
    let text: String = raw.chars().take(LIMIT).collect();
    Value::String(text)
}

fn parse_reply_array(raw: &str, report: &mut ParseReport) -> Option<Vec<Value>> {
    let (value, repairs) = repair::extract_json(raw);
    report.repairs_applied = repairs;
    let Some(value) = value else {
        report.drop_record(excerpt(raw), ReasonCode::Unparseable);
        return None;
    };
    match value {
        Value::Array(items) => Some(items),
        other => {
            report.drop_record(other, ReasonCode::Unparseable);
            None
        }
    }
}

/// Parse a stage-1 reply into detection records for `doc`.
///
/// Event type names are resolved case-insensitively against the ontology;
/// unresolved ones are dropped with [`ReasonCode::UnknownType`]. Triggers
/// are grounded to their first occurrence. Exact duplicate records collapse
/// to one, with a warning.
pub fn parse_detection(
    raw: &str,
    ontology: &Ontology,
    doc: &Document,
) -> (Vec<DetectionRecord>, ParseReport) {
    let mut report = ParseReport::default();
    let mut records: Vec<DetectionRecord> = Vec::new();
    let Some(items) = parse_reply_array(raw, &mut report) else {
        return (records, report);
    };
    for item in items {
        let Some(obj) = item.as_object() else {
            report.drop_record(item, ReasonCode::Unparseable);
            continue;
        };
        if let Some(claimed) = string_field(obj, "doc_id") {
            if claimed != doc.doc_id {
                report.warnings.push(format!(
                    "record claims doc_id {claimed:?} but was parsed for {:?}",
                    doc.doc_id
                ));
            }
        }
        let (Some(raw_type), Some(raw_trigger)) =
            (string_field(obj, "event_type"), string_field(obj, "trigger"))
        else {
            report.drop_record(item.clone(), ReasonCode::Unparseable);
            continue;
        };
        let Some(type_def) = ontology.resolve_type(&raw_type) else {
            report.drop_record(item.clone(), ReasonCode::UnknownType);
            continue;
        };
        let span = ground(&raw_trigger, doc, None);
        let record = DetectionRecord {
            doc_id: doc.doc_id.clone(),
            event_type: type_def.name.clone(),
            trigger_text: span
                .as_ref()
                .map_or_else(|| raw_trigger.clone(), |s| s.text.clone()),
            grounded: span.is_some(),
            trigger_span: span,
        };
        if records.contains(&record) {
            report.warnings.push(format!(
                "duplicate detection collapsed: {} / {:?}",
                record.event_type, record.trigger_text
            ));
        } else {
            records.push(record);
        }
    }
    (records, report)
}

/// Parse a stage-2 reply into argument records for `doc`.
///
/// Each reply element names an event and lists its arguments. The event must
/// anchor to one of `detected` by canonical type and normalized trigger text;
/// otherwise the element and all its arguments are dropped with
/// [`ReasonCode::UnanchoredEvent`]. Roles are resolved case-insensitively
/// within the event type. Argument spans are grounded to the occurrence
/// nearest the anchoring trigger.
pub fn parse_arguments(
    raw: &str,
    ontology: &Ontology,
    doc: &Document,
    detected: &[DetectionRecord],
) -> (Vec<ArgumentRecordOut>, ParseReport) {
    let mut report = ParseReport::default();
    let mut records: Vec<ArgumentRecordOut> = Vec::new();
    let Some(items) = parse_reply_array(raw, &mut report) else {
        return (records, report);
    };
    for item in items {
        let Some(obj) = item.as_object() else {
            report.drop_record(item, ReasonCode::Unparseable);
            continue;
        };
        let (Some(raw_type), Some(raw_trigger)) =
            (string_field(obj, "event_type"), string_field(obj, "trigger"))
        else {
            report.drop_record(item.clone(), ReasonCode::Unparseable);
            continue;
        };
        let Some(type_def) = ontology.resolve_type(&raw_type) else {
            report.drop_record(item.clone(), ReasonCode::UnknownType);
            continue;
        };
        let trigger_key = crate::text::normalize(&raw_trigger);
        let Some(anchor) = detected.iter().find(|d| {
            d.event_type == type_def.name && crate::text::normalize(&d.trigger_text) == trigger_key
        }) else {
            report.drop_record(item.clone(), ReasonCode::UnanchoredEvent);
            continue;
        };
        let Some(args) = obj.get("arguments").and_then(Value::as_array) else {
            report.warnings.push(format!(
                "event {} / {:?} carries no arguments array",
                type_def.name, raw_trigger
            ));
            continue;
        };
        for arg in args {
            let Some(arg_obj) = arg.as_object() else {
                report.drop_record(arg.clone(), ReasonCode::Unparseable);
                continue;
            };
            let (Some(raw_role), Some(raw_text)) =
                (string_field(arg_obj, "role"), string_field(arg_obj, "text"))
            else {
                report.drop_record(arg.clone(), ReasonCode::Unparseable);
                continue;
            };
            let Some(role_def) = type_def.resolve_role(&raw_role) else {
                report.drop_record(arg.clone(), ReasonCode::UnknownRole);
                continue;
            };
            let span = ground(&raw_text, doc, anchor.trigger_span.as_ref());
            let record = ArgumentRecordOut {
                event_type: type_def.name.clone(),
                trigger_text: anchor.trigger_text.clone(),
                role: role_def.name.clone(),
                arg_text: span
                    .as_ref()
                    .map_or_else(|| raw_text.clone(), |s| s.text.clone()),
                grounded: span.is_some(),
                arg_span: span,
            };
            if records.contains(&record) {
                report.warnings.push(format!(
                    "duplicate argument collapsed: {} / {:?} / {}",
                    record.event_type, record.trigger_text, record.role
                ));
            } else {
                records.push(record);
            }
        }
    }
    (records, report)
}
