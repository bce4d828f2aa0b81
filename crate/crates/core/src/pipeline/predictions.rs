//! Assembled predictions: the structured list of events a run produces.
//!
//! A [`PredictionSet`] holds, per document, the predicted events with their
//! arguments. Grounded records carry character spans; ungrounded ones keep
//! only surface text, which excludes them from offset-mode scoring but still
//! lets text-mode scoring see them. The set serializes to JSONL with one
//! document per line and `null` offsets for ungrounded mentions.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{ArgumentMention, Corpus, Document, EventMention, TextSpan};
use crate::outparse::{ArgumentRecordOut, DetectionRecord};

use super::PipelineError;

/// One predicted argument of a predicted event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictedArgument {
    pub role: String,
    pub text: String,
    pub span: Option<TextSpan>,
}

/// One predicted event with its attached arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictedEvent {
    pub event_type: String,
    pub trigger_text: String,
    pub trigger_span: Option<TextSpan>,
    pub arguments: Vec<PredictedArgument>,
}

/// All predictions for one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictedDoc {
    pub doc_id: String,
    pub events: Vec<PredictedEvent>,
}

impl PredictedDoc {
    /// The offset-mode view: grounded events as [`EventMention`]s and their
    /// grounded arguments as [`ArgumentMention`]s whose `event_index`
    /// addresses the returned event list. Ungrounded events, their
    /// arguments, and ungrounded arguments are all absent here.
    pub fn grounded_mentions(&self) -> (Vec<EventMention>, Vec<ArgumentMention>) {
        let mut events = Vec::new();
        let mut arguments = Vec::new();
        for event in &self.events {
            let Some(trigger) = &event.trigger_span else {
                continue;
            };
            let event_index = events.len();
            events.push(EventMention {
                event_type: event.event_type.clone(),
                trigger: trigger.clone(),
            });
            for arg in &event.arguments {
                if let Some(span) = &arg.span {
                    arguments.push(ArgumentMention {
                        role: arg.role.clone(),
                        span: span.clone(),
                        event_index,
                    });
                }
            }
        }
        (events, arguments)
    }
}

/// Predictions for a whole corpus, keyed and ordered by doc_id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredictionSet {
    pub docs: BTreeMap<String, PredictedDoc>,
}

/// Attach stage-2 argument records to stage-1 detections and produce the
/// final prediction set. Arguments attach to the first detection with the
/// same (event_type, trigger_text); records that match none are excluded,
/// each noted in the returned warnings.
pub fn assemble_predictions(
    detections: &BTreeMap<String, Vec<DetectionRecord>>,
    arguments: &BTreeMap<String, Vec<ArgumentRecordOut>>,
) -> (PredictionSet, Vec<String>) {
    let mut warnings = Vec::new();
    let mut docs = BTreeMap::new();
    for (doc_id, detected) in detections {
        let mut events: Vec<PredictedEvent> = detected
            .iter()
            .map(|d| PredictedEvent {
                event_type: d.event_type.clone(),
                trigger_text: d.trigger_text.clone(),
                trigger_span: d.trigger_span.clone(),
                arguments: Vec::new(),
            })
            .collect();
        for arg in arguments.get(doc_id).map_or(&[][..], Vec::as_slice) {
            let anchor = events
                .iter_mut()
                .find(|e| e.event_type == arg.event_type && e.trigger_text == arg.trigger_text);
            match anchor {
                Some(event) => event.arguments.push(PredictedArgument {
                    role: arg.role.clone(),
                    text: arg.arg_text.clone(),
                    span: arg.arg_span.clone(),
                }),
                None => warnings.push(format!(
                    "{doc_id}: argument ({}, {:?}, {}) anchors to no detection; excluded",
                    arg.event_type, arg.trigger_text, arg.role
                )),
            }
        }
        docs.insert(
            doc_id.clone(),
            PredictedDoc {
                doc_id: doc_id.clone(),
                events,
            },
        );
    }
    for doc_id in arguments.keys() {
        if !detections.contains_key(doc_id) {
            warnings.push(format!(
                "{doc_id}: argument records exist but no detection stage ran; excluded"
            ));
        }
    }
    (PredictionSet { docs }, warnings)
}

impl PredictionSet {
    /// Re-cast gold annotations as predictions. Scoring a corpus against
    /// itself must then be perfect, which makes this the identity fixture
    /// for evaluator tests.
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut docs = BTreeMap::new();
        for doc in &corpus.documents {
            docs.insert(doc.doc_id.clone(), predicted_from_gold(doc));
        }
        PredictionSet { docs }
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Serialize as JSONL, one document per line, ordered by doc_id.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for doc in self.docs.values() {
            let wire = DocWire::from(doc);
            out.push_str(&serde_json::to_string(&wire).expect("predictions serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), PipelineError> {
        fs::write(path, self.to_jsonl()).map_err(PipelineError::io_at(path))
    }

    pub fn parse_jsonl(text: &str) -> Result<Self, PipelineError> {
        let mut docs = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let wire: DocWire = serde_json::from_str(line).map_err(|e| {
                PipelineError::Predictions {
                    detail: format!("line {}: {e}", i + 1),
                }
            })?;
            let doc = wire.into_doc().map_err(|detail| PipelineError::Predictions {
                detail: format!("line {}: {detail}", i + 1),
            })?;
            if docs.insert(doc.doc_id.clone(), doc).is_some() {
                return Err(PipelineError::Predictions {
                    detail: format!("line {}: duplicate doc_id", i + 1),
                });
            }
        }
        Ok(PredictionSet { docs })
    }

    pub fn read_jsonl(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(PipelineError::io_at(path))?;
        Self::parse_jsonl(&text)
    }
}

fn predicted_from_gold(doc: &Document) -> PredictedDoc {
    let mut events: Vec<PredictedEvent> = doc
        .events
        .iter()
        .map(|ev| PredictedEvent {
            event_type: ev.event_type.clone(),
            trigger_text: ev.trigger.text.clone(),
            trigger_span: Some(ev.trigger.clone()),
            arguments: Vec::new(),
        })
        .collect();
    for arg in &doc.arguments {
        if let Some(event) = events.get_mut(arg.event_index) {
            event.arguments.push(PredictedArgument {
                role: arg.role.clone(),
                text: arg.span.text.clone(),
                span: Some(arg.span.clone()),
            });
        }
    }
    PredictedDoc {
        doc_id: doc.doc_id.clone(),
        events,
    }
}

// ==== wire format ====

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpanWire {
    text: String,
    start: Option<usize>,
    end: Option<usize>,
}

impl SpanWire {
    fn new(text: &str, span: &Option<TextSpan>) -> Self {
        SpanWire {
            text: text.to_string(),
            start: span.as_ref().map(|s| s.start),
            end: span.as_ref().map(|s| s.end),
        }
    }

    fn into_parts(self) -> Result<(String, Option<TextSpan>), String> {
        let span = match (self.start, self.end) {
            (Some(start), Some(end)) if start < end => {
                Some(TextSpan::new(start, end, self.text.clone()))
            }
            (None, None) => None,
            _ => {
                return Err(format!(
                    "offsets must be both present and ordered or both null, got {:?}..{:?}",
                    self.start, self.end
                ))
            }
        };
        Ok((self.text, span))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArgWire {
    role: String,
    #[serde(flatten)]
    span: SpanWire,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventWire {
    event_type: String,
    trigger: SpanWire,
    arguments: Vec<ArgWire>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocWire {
    doc_id: String,
    events: Vec<EventWire>,
}

impl From<&PredictedDoc> for DocWire {
    fn from(doc: &PredictedDoc) -> Self {
        DocWire {
            doc_id: doc.doc_id.clone(),
            events: doc
                .events
                .iter()
                .map(|ev| EventWire {
                    event_type: ev.event_type.clone(),
                    trigger: SpanWire::new(&ev.trigger_text, &ev.trigger_span),
                    arguments: ev
                        .arguments
                        .iter()
                        .map(|arg| ArgWire {
                            role: arg.role.clone(),
                            span: SpanWire::new(&arg.text, &arg.span),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

impl DocWire {
    fn into_doc(self) -> Result<PredictedDoc, String> {
        let mut events = Vec::new();
        for ev in self.events {
            let (trigger_text, trigger_span) = ev.trigger.into_parts()?;
            let mut arguments = Vec::new();
            for arg in ev.arguments {
                let (text, span) = arg.span.into_parts()?;
                arguments.push(PredictedArgument {
                    role: arg.role,
                    text,
                    span,
                });
            }
            events.push(PredictedEvent {
                event_type: ev.event_type,
                trigger_text,
                trigger_span,
                arguments,
            });
        }
        Ok(PredictedDoc {
            doc_id: self.doc_id,
            events,
        })
    }
}
