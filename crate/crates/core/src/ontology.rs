//! Event-type registry: the closed set of event types, their argument roles,
//! and natural-language definitions used to build prompts.
//!
//! An ontology starts as a skeleton derived from gold annotations (names
//! only, empty definitions), gets its definitions filled either by hand or
//! by an LLM, and is then saved to a JSON file that pipeline runs load.
//! Definitions are generated once and cached to that file; runs never
//! regenerate them implicitly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::llm::{LlmClient, LlmRequest, ProviderConfig};

/// One argument role of an event type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleDef {
    pub name: String,
    /// Free text; empty in skeleton state.
    #[serde(default)]
    pub definition: String,
}

/// One event type with its roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTypeDef {
    /// Dotted hierarchical name, e.g. "Conflict.Attack.Unspecified".
    pub name: String,
    #[serde(default)]
    pub definition: String,
    /// What counts as a trigger word for this type.
    #[serde(default)]
    pub trigger_definition: String,
    pub roles: Vec<RoleDef>,
    /// Gold mention count observed when the skeleton was derived. Prompt
    /// construction drops definitions of rarer types first under a budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<u64>,
}

impl EventTypeDef {
    /// Exact role lookup.
    pub fn role(&self, name: &str) -> Option<&RoleDef> {
        self.roles.iter().find(|r| r.name == name)
    }

    /// Case-insensitive role lookup returning the canonical definition.
    pub fn resolve_role(&self, name: &str) -> Option<&RoleDef> {
        let wanted = name.trim().to_lowercase();
        self.roles.iter().find(|r| r.name.to_lowercase() == wanted)
    }
}

/// How an ontology came to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OntologySource {
    Loaded,
    Derived,
    LlmGenerated,
}

/// The closed domain of event types, ordered lexicographically by name so
/// that prompt construction is stable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ontology {
    pub source: OntologySource,
    pub event_types: Vec<EventTypeDef>,
}

impl Ontology {
    /// Build an ontology, sorting types by name and enforcing invariants.
    pub fn new(
        source: OntologySource,
        mut event_types: Vec<EventTypeDef>,
    ) -> Result<Self, OntologyError> {
        event_types.sort_by(|a, b| a.name.cmp(&b.name));
        let ontology = Ontology { source, event_types };
        ontology.check()?;
        Ok(ontology)
    }

    fn check(&self) -> Result<(), OntologyError> {
        let mut seen = std::collections::BTreeSet::new();
        for td in &self.event_types {
            if td.name.trim().is_empty() {
                return Err(OntologyError::Invalid("empty event type name".into()));
            }
            if !seen.insert(&td.name) {
                return Err(OntologyError::Invalid(format!(
                    "duplicate event type name {:?}",
                    td.name
                )));
            }
            let mut roles = std::collections::BTreeSet::new();
            for role in &td.roles {
                if role.name.trim().is_empty() {
                    return Err(OntologyError::Invalid(format!(
                        "event type {:?} has an empty role name",
                        td.name
                    )));
                }
                if !roles.insert(&role.name) {
                    return Err(OntologyError::Invalid(format!(
                        "event type {:?} repeats role {:?}",
                        td.name, role.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.event_types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.event_types.is_empty()
    }

    pub fn type_names(&self) -> impl Iterator<Item = &str> {
        self.event_types.iter().map(|t| t.name.as_str())
    }

    /// Exact type lookup (names are kept sorted).
    pub fn event_type(&self, name: &str) -> Option<&EventTypeDef> {
        self.event_types
            .binary_search_by(|t| t.name.as_str().cmp(name))
            .ok()
            .map(|i| &self.event_types[i])
    }

    /// Case-insensitive type lookup returning the canonical entry.
    pub fn resolve_type(&self, name: &str) -> Option<&EventTypeDef> {
        if let Some(exact) = self.event_type(name.trim()) {
            return Some(exact);
        }
        let wanted = name.trim().to_lowercase();
        self.event_types
            .iter()
            .find(|t| t.name.to_lowercase() == wanted)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OntologyError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed ontology file: {0}")]
    Malformed(String),
    #[error("invalid ontology: {0}")]
    Invalid(String),
}

/// Serialize with a fixed layout so equal ontologies produce identical bytes.
pub fn to_json(ontology: &Ontology) -> String {
    let mut out = serde_json::to_string_pretty(ontology).expect("ontology serializes");
    out.push('\n');
    out
}

pub fn save_ontology(ontology: &Ontology, path: &Path) -> Result<(), OntologyError> {
    std::fs::write(path, to_json(ontology)).map_err(|source| OntologyError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_ontology(path: &Path) -> Result<Ontology, OntologyError> {
    let content = std::fs::read_to_string(path).map_err(|source| OntologyError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let parsed: Ontology = serde_json::from_str(&content)
        .map_err(|e| OntologyError::Malformed(format!("{}: {e}", path.display())))?;
    Ontology::new(parsed.source, parsed.event_types)
}

/// Collect exactly the event types and (type, role) pairs observed in gold
/// annotations, with empty definitions and per-type mention counts.
pub fn derive_skeleton(corpus: &Corpus) -> Ontology {
    let mut types: BTreeMap<&str, (u64, std::collections::BTreeSet<&str>)> = BTreeMap::new();
    for doc in &corpus.documents {
        for event in &doc.events {
            types.entry(&event.event_type).or_default().0 += 1;
        }
        for arg in &doc.arguments {
            if let Some(event) = doc.events.get(arg.event_index) {
                types
                    .entry(&event.event_type)
                    .or_default()
                    .1
                    .insert(&arg.role);
            }
        }
    }
    let event_types = types
        .into_iter()
        .map(|(name, (count, roles))| EventTypeDef {
            name: name.to_string(),
            definition: String::new(),
            trigger_definition: String::new(),
            roles: roles
                .into_iter()
                .map(|r| RoleDef {
                    name: r.to_string(),
                    definition: String::new(),
                })
                .collect(),
            frequency: Some(count),
        })
        .collect();
    // names come out of a BTreeMap already sorted and unique
    Ontology {
        source: OntologySource::Derived,
        event_types,
    }
}

// ==== definition generation ====

const DEFINITION_SYSTEM_TEXT: &str =
    "You write precise annotation guidelines for a document-level event extraction schema.";
const DEFINITION_TEMPLATE: &str = include_str!("../resources/prompts/definition_request.txt");

/// Render the (system, user) texts of the definition request for one event
/// type, using up to `per_type_examples` gold snippets from the corpus.
pub fn definition_request_prompt(
    type_def: &EventTypeDef,
    corpus: &Corpus,
    per_type_examples: usize,
) -> (String, String) {
    let role_names = if type_def.roles.is_empty() {
        "(none)".to_string()
    } else {
        type_def
            .roles
            .iter()
            .map(|r| r.name.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    };

    let mut examples = String::new();
    let mut taken = 0usize;
    'docs: for doc in &corpus.documents {
        for event in &doc.events {
            if event.event_type != type_def.name {
                continue;
            }
            let snippet = enclosing_sentence(doc, event.trigger.start);
            let _ = writeln!(examples, "- \"{snippet}\" (trigger: \"{}\")", event.trigger.text);
            taken += 1;
            if taken >= per_type_examples {
                break 'docs;
            }
        }
    }
    if examples.is_empty() {
        examples.push_str("(no examples available)\n");
    }

    let user_text = DEFINITION_TEMPLATE
        .replace("{{event_type}}", &type_def.name)
        .replace("{{role_names}}", &role_names)
        .replace("{{examples}}", examples.trim_end());
    (DEFINITION_SYSTEM_TEXT.to_string(), user_text)
}

fn enclosing_sentence(doc: &Document, position: usize) -> String {
    for bound in &doc.sentence_bounds {
        if bound.start <= position && position < bound.end {
            return bound.text.clone();
        }
    }
    doc.text.clone()
}

/// A definition request that produced nothing usable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailedDefinition {
    pub event_type: String,
    pub reason: String,
}

/// Result of [`generate_definitions`]: the (possibly partially) filled
/// ontology plus the types that failed.
#[derive(Debug)]
pub struct DefinitionsOutcome {
    pub ontology: Ontology,
    pub failed: Vec<FailedDefinition>,
}

#[derive(Debug, Deserialize)]
struct DefinitionReply {
    #[serde(default)]
    definition: String,
    #[serde(default)]
    trigger_definition: String,
    #[serde(default)]
    roles: BTreeMap<String, String>,
}

/// Fill every definition field of the skeleton with LLM-written text, one
/// completion request per event type. Requests run concurrently under the
/// client's in-flight bound; results merge deterministically by type name.
/// Types whose request fails or returns nothing parseable keep their empty
/// definitions and are reported in the outcome.
pub fn generate_definitions(
    skeleton: &Ontology,
    corpus: &Corpus,
    client: &LlmClient,
    provider: &ProviderConfig,
    per_type_examples: usize,
) -> DefinitionsOutcome {
    let replies: Vec<Result<DefinitionReply, String>> = std::thread::scope(|scope| {
        let handles: Vec<_> = skeleton
            .event_types
            .iter()
            .map(|type_def| {
                scope.spawn(move || {
                    let (system, user) =
                        definition_request_prompt(type_def, corpus, per_type_examples);
                    let request = LlmRequest::new(provider, &system, &user);
                    let response = client.complete(&request).map_err(|e| e.to_string())?;
                    parse_definition_reply(&response.text)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });

    let mut event_types = skeleton.event_types.clone();
    let mut failed = Vec::new();
    for (type_def, reply) in event_types.iter_mut().zip(replies) {
        match reply {
            Ok(parsed) => {
                type_def.definition = parsed.definition;
                type_def.trigger_definition = parsed.trigger_definition;
                // fill known roles only; extra keys in the reply are ignored
                // so generation can never add or remove names
                for role in &mut type_def.roles {
                    if let Some(text) = parsed.roles.get(&role.name) {
                        role.definition = text.clone();
                    }
                }
            }
            Err(reason) => failed.push(FailedDefinition {
                event_type: type_def.name.clone(),
                reason,
            }),
        }
    }

    DefinitionsOutcome {
        ontology: Ontology {
            source: OntologySource::LlmGenerated,
            event_types,
        },
        failed,
    }
}

/// Pull the definition object out of a model reply, tolerating code fences
/// and surrounding prose.
fn parse_definition_reply(text: &str) -> Result<DefinitionReply, String> {
    let without_fences: String = text
        .lines()
        .filter(|line| !line.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n");
    let start = without_fences.find('{');
    let end = without_fences.rfind('}');
    let body = match (start, end) {
        (Some(s), Some(e)) if s < e => &without_fences[s..=e],
        _ => return Err("response contains no JSON object".to_string()),
    };
    let reply: DefinitionReply =
        serde_json::from_str(body).map_err(|e| format!("unparseable definition object: {e}"))?;
    if reply.definition.trim().is_empty() {
        return Err("definition field missing or empty".to_string());
    }
    Ok(reply)
}
