//! Ingestion of WikiEvents-style JSON-lines files.
//!
//! The source format is token-based: triggers and entity mentions carry
//! document-level token indices, and arguments reference entity mentions by
//! id. Ingestion converts everything to char offsets. Field names are not
//! hard-coded: a [`MappingDescriptor`] names every field we read, so schema
//! drift in the source data is a config change. The default descriptor ships
//! as a resource and matches the published WikiEvents layout.
//!
//! Document text is taken from the raw `text` field when the source tokens
//! align with it greedily; otherwise the text is reconstructed by joining
//! tokens with single spaces.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::format::join_tokens;
use super::{ArgumentMention, Corpus, CorpusError, Document, EventMention, Split, TextSpan};

/// Field names for the WikiEvents-style source schema. Descriptor files
/// name every field explicitly; the embedded default matches the published
/// WikiEvents layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingDescriptor {
    pub doc_id: String,
    pub tokens: String,
    pub text: String,
    pub sentences: String,
    pub event_mentions: String,
    pub event_type: String,
    pub trigger: String,
    pub token_start: String,
    pub token_end: String,
    pub surface_text: String,
    pub arguments: String,
    pub role: String,
    pub entity_ref: String,
    pub entity_mentions: String,
    pub entity_id: String,
}

impl Default for MappingDescriptor {
    fn default() -> Self {
        serde_json::from_str(include_str!("../../resources/wikievents_mapping.json"))
            .expect("embedded mapping descriptor is valid")
    }
}

impl MappingDescriptor {
    /// Load a descriptor from a JSON file.
    pub fn from_file(path: &Path) -> Result<Self, CorpusError> {
        let content = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&content).map_err(|e| CorpusError::MalformedLine {
            line: 0,
            detail: format!("mapping descriptor {}: {e}", path.display()),
        })
    }
}

/// Load a WikiEvents-style JSON-lines file using the given field mapping.
pub fn load_wikievents_jsonl(
    path: &Path,
    mapping: &MappingDescriptor,
) -> Result<Corpus, CorpusError> {
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_wikievents_jsonl(&content, Split::from_path(path), mapping)
}

/// Parse WikiEvents-style JSON-lines content.
pub fn parse_wikievents_jsonl(
    content: &str,
    split: Split,
    mapping: &MappingDescriptor,
) -> Result<Corpus, CorpusError> {
    let mut documents = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| CorpusError::MalformedLine {
            line: line_no,
            detail: e.to_string(),
        })?;
        let doc = convert_document(&value, mapping, line_no)?;
        if !seen.insert(doc.doc_id.clone()) {
            return Err(CorpusError::DuplicateDocId(doc.doc_id));
        }
        documents.push(doc);
    }
    Ok(Corpus::new(split, documents))
}

fn convert_document(
    value: &Value,
    m: &MappingDescriptor,
    line_no: usize,
) -> Result<Document, CorpusError> {
    let malformed = |detail: String| CorpusError::MalformedLine {
        line: line_no,
        detail,
    };

    let doc_id = value[&m.doc_id]
        .as_str()
        .ok_or_else(|| malformed(format!("missing string field {:?}", m.doc_id)))?
        .to_string();
    let bad_doc = |detail: String| CorpusError::BadDocument {
        doc_id: doc_id.clone(),
        detail,
    };

    let tokens: Vec<String> = value[&m.tokens]
        .as_array()
        .ok_or_else(|| malformed(format!("missing token array {:?}", m.tokens)))?
        .iter()
        .map(|t| {
            t.as_str()
                .map(str::to_string)
                .ok_or_else(|| malformed("non-string token".to_string()))
        })
        .collect::<Result<_, _>>()?;

    // Prefer the raw text when the tokens align with it; reconstruct otherwise.
    let (text, token_spans) = match value[&m.text].as_str() {
        Some(raw) => match align_tokens(raw, &tokens) {
            Some(spans) => (raw.to_string(), spans),
            None => join_tokens(&tokens),
        },
        None => join_tokens(&tokens),
    };

    let token_span = |start: usize, end: usize, what: &str| -> Result<TextSpan, CorpusError> {
        if start >= end || end > token_spans.len() {
            return Err(bad_doc(format!(
                "{what}: token span [{start}, {end}) outside the document's {} tokens",
                token_spans.len()
            )));
        }
        let char_start = token_spans[start].0;
        let char_end = token_spans[end - 1].1;
        TextSpan::from_offsets(&text, char_start, char_end)
            .ok_or_else(|| bad_doc(format!("{what}: converted span outside text")))
    };

    // entity id -> token span, for resolving argument references
    let mut entity_spans = std::collections::BTreeMap::new();
    if let Some(entities) = value[&m.entity_mentions].as_array() {
        for ent in entities {
            let (Some(id), Some(s), Some(e)) = (
                ent[&m.entity_id].as_str(),
                ent[&m.token_start].as_u64(),
                ent[&m.token_end].as_u64(),
            ) else {
                continue;
            };
            entity_spans.insert(id.to_string(), (s as usize, e as usize));
        }
    }

    let mut events = Vec::new();
    let mut arguments = Vec::new();
    if let Some(mentions) = value[&m.event_mentions].as_array() {
        for (ev_idx, ev) in mentions.iter().enumerate() {
            let event_type = ev[&m.event_type]
                .as_str()
                .ok_or_else(|| bad_doc(format!("event {ev_idx}: missing {:?}", m.event_type)))?
                .to_string();
            let trig = &ev[&m.trigger];
            let (Some(ts), Some(te)) = (trig[&m.token_start].as_u64(), trig[&m.token_end].as_u64())
            else {
                return Err(bad_doc(format!("event {ev_idx}: trigger lacks token offsets")));
            };
            let trigger = token_span(ts as usize, te as usize, &format!("event {ev_idx} trigger"))?;
            events.push(EventMention { event_type, trigger });

            if let Some(args) = ev[&m.arguments].as_array() {
                for (a_idx, arg) in args.iter().enumerate() {
                    let role = arg[&m.role]
                        .as_str()
                        .ok_or_else(|| {
                            bad_doc(format!("event {ev_idx} argument {a_idx}: missing {:?}", m.role))
                        })?
                        .to_string();
                    // arguments either reference an entity mention or carry
                    // token offsets inline
                    let span = if let Some(entity_id) = arg[&m.entity_ref].as_str() {
                        let (s, e) = entity_spans.get(entity_id).ok_or_else(|| {
                            bad_doc(format!(
                                "event {ev_idx} argument {a_idx}: unknown entity id {entity_id:?}"
                            ))
                        })?;
                        token_span(*s, *e, &format!("event {ev_idx} argument {a_idx}"))?
                    } else if let (Some(s), Some(e)) =
                        (arg[&m.token_start].as_u64(), arg[&m.token_end].as_u64())
                    {
                        token_span(s as usize, e as usize, &format!("event {ev_idx} argument {a_idx}"))?
                    } else {
                        return Err(bad_doc(format!(
                            "event {ev_idx} argument {a_idx}: no entity reference or token offsets"
                        )));
                    };
                    arguments.push(ArgumentMention {
                        role,
                        span,
                        event_index: ev_idx,
                    });
                }
            }
        }
    }

    let sentence_bounds = sentence_bounds(&value[&m.sentences], &token_spans, &text);

    let doc = Document {
        doc_id,
        text,
        sentence_bounds,
        events,
        arguments,
        provenance: None,
    };
    let errors = doc.integrity_errors();
    if !errors.is_empty() {
        return Err(CorpusError::BadDocument {
            doc_id: doc.doc_id,
            detail: format!("{} (line {line_no})", errors.join("; ")),
        });
    }
    Ok(doc)
}

/// Greedily align tokens against raw text. Returns per-token char spans, or
/// `None` when any token cannot be found in order.
fn align_tokens(raw: &str, tokens: &[String]) -> Option<Vec<(usize, usize)>> {
    let chars: Vec<char> = raw.chars().collect();
    let mut spans = Vec::with_capacity(tokens.len());
    let mut pos = 0usize;
    for tok in tokens {
        let tok_chars: Vec<char> = tok.chars().collect();
        if tok_chars.is_empty() {
            return None;
        }
        let mut found = None;
        let mut i = pos;
        while i + tok_chars.len() <= chars.len() {
            if chars[i..i + tok_chars.len()] == tok_chars[..] {
                found = Some(i);
                break;
            }
            // only whitespace may separate aligned tokens
            if !chars[i].is_whitespace() && i > pos {
                break;
            }
            i += 1;
        }
        let start = found?;
        spans.push((start, start + tok_chars.len()));
        pos = start + tok_chars.len();
    }
    Some(spans)
}

/// Derive sentence boundaries from the source `sentences` field.
///
/// The shape is auto-detected per entry:
/// - `[start, end]` with two integers: direct char offsets;
/// - a pair `[token_list, text]`: the sentence covers `token_list.len()` tokens;
/// - a plain array: the sentence covers `len()` tokens.
///
/// Anything unrecognized (or an absent field) falls back to one sentence
/// spanning the whole text.
fn sentence_bounds(value: &Value, token_spans: &[(usize, usize)], text: &str) -> Vec<TextSpan> {
    let whole_doc = || {
        if text.is_empty() {
            Vec::new()
        } else {
            TextSpan::from_offsets(text, 0, crate::text::char_len(text))
                .map(|s| vec![s])
                .unwrap_or_default()
        }
    };
    let Some(entries) = value.as_array() else {
        return whole_doc();
    };
    if entries.is_empty() {
        return whole_doc();
    }

    let mut bounds = Vec::with_capacity(entries.len());
    let mut cursor = 0usize; // token cursor
    for entry in entries {
        let arr = match entry.as_array() {
            Some(a) => a,
            None => return whole_doc(),
        };
        // direct char span
        if arr.len() == 2 && arr[0].is_u64() && arr[1].is_u64() {
            let (s, e) = (arr[0].as_u64().unwrap() as usize, arr[1].as_u64().unwrap() as usize);
            match TextSpan::from_offsets(text, s, e) {
                Some(span) => bounds.push(span),
                None => return whole_doc(),
            }
            continue;
        }
        // pair [token_list, text] or plain token list
        let count = if arr.len() == 2 && arr[0].is_array() && arr[1].is_string() {
            arr[0].as_array().unwrap().len()
        } else {
            arr.len()
        };
        if count == 0 || cursor + count > token_spans.len() {
            return whole_doc();
        }
        let char_start = token_spans[cursor].0;
        let char_end = token_spans[cursor + count - 1].1;
        match TextSpan::from_offsets(text, char_start, char_end) {
            Some(span) => bounds.push(span),
            None => return whole_doc(),
        }
        cursor += count;
    }
    bounds
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> String {
        serde_json::json!({
            "doc_id": "wiki_1",
            "tokens": ["The", "car", "was", "driven", "to", "the", "academy", "."],
            "text": "The car was driven to the academy .",
            "sentences": [[["The", "car", "was", "driven", "to", "the", "academy", "."], "The car was driven to the academy ."]],
            "entity_mentions": [
                {"id": "ent-1", "start": 1, "end": 2, "text": "car"},
                {"id": "ent-2", "start": 6, "end": 7, "text": "academy"}
            ],
            "event_mentions": [
                {
                    "event_type": "Movement.Transportation.Unspecified",
                    "trigger": {"start": 2, "end": 4, "text": "was driven"},
                    "arguments": [
                        {"entity_id": "ent-1", "role": "Vehicle"},
                        {"entity_id": "ent-2", "role": "Destination"}
                    ]
                }
            ]
        })
        .to_string()
    }

    #[test]
    fn converts_token_offsets_to_char_offsets() {
        let corpus =
            parse_wikievents_jsonl(&line(), Split::Custom, &MappingDescriptor::default()).unwrap();
        assert_eq!(corpus.documents.len(), 1);
        let doc = &corpus.documents[0];
        assert_eq!(doc.text, "The car was driven to the academy .");
        assert_eq!(doc.events.len(), 1);
        let trig = &doc.events[0].trigger;
        assert_eq!(trig.text, "was driven");
        assert_eq!(&doc.text[trig.start..trig.end], "was driven");
        assert_eq!(doc.arguments.len(), 2);
        assert_eq!(doc.arguments[0].span.text, "car");
        assert_eq!(doc.arguments[1].span.text, "academy");
        assert_eq!(doc.sentence_bounds.len(), 1);
        assert!(doc.integrity_errors().is_empty());
    }

    #[test]
    fn reconstructs_text_when_raw_text_absent() {
        let mut v: serde_json::Value = serde_json::from_str(&line()).unwrap();
        v.as_object_mut().unwrap().remove("text");
        let corpus = parse_wikievents_jsonl(
            &v.to_string(),
            Split::Custom,
            &MappingDescriptor::default(),
        )
        .unwrap();
        // tokens joined with single spaces
        assert_eq!(corpus.documents[0].text, "The car was driven to the academy .");
    }

    #[test]
    fn misaligned_raw_text_falls_back_to_reconstruction() {
        let mut v: serde_json::Value = serde_json::from_str(&line()).unwrap();
        v["text"] = serde_json::json!("completely different prose");
        let corpus = parse_wikievents_jsonl(
            &v.to_string(),
            Split::Custom,
            &MappingDescriptor::default(),
        )
        .unwrap();
        assert_eq!(corpus.documents[0].text, "The car was driven to the academy .");
    }

    #[test]
    fn unknown_entity_reference_is_an_error() {
        let mut v: serde_json::Value = serde_json::from_str(&line()).unwrap();
        v["event_mentions"][0]["arguments"][0]["entity_id"] = serde_json::json!("ent-missing");
        let err = parse_wikievents_jsonl(
            &v.to_string(),
            Split::Custom,
            &MappingDescriptor::default(),
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::BadDocument { doc_id, .. } if doc_id == "wiki_1"));
    }

    #[test]
    fn trigger_token_span_out_of_range_names_doc() {
        let mut v: serde_json::Value = serde_json::from_str(&line()).unwrap();
        v["event_mentions"][0]["trigger"]["end"] = serde_json::json!(99);
        let err = parse_wikievents_jsonl(
            &v.to_string(),
            Split::Custom,
            &MappingDescriptor::default(),
        )
        .unwrap_err();
        match err {
            CorpusError::BadDocument { doc_id, detail } => {
                assert_eq!(doc_id, "wiki_1");
                assert!(detail.contains("token span"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_inferred_from_filename() {
        use std::path::PathBuf;
        assert_eq!(Split::from_path(&PathBuf::from("/data/train.jsonl")), Split::Train);
        assert_eq!(Split::from_path(&PathBuf::from("dev.jsonl")), Split::Dev);
        assert_eq!(Split::from_path(&PathBuf::from("TEST.jsonl")), Split::Test);
        assert_eq!(Split::from_path(&PathBuf::from("mine.jsonl")), Split::Custom);
    }
}
