//! Two-stage prompt construction.
//!
//! Stage 1 (detection) asks for every event mention in a document; stage 2
//! (argument extraction) feeds the stage-1 results back verbatim and asks
//! for role fillers. Both prompts assemble from named sections under an
//! optional character budget: when the assembled text is too long, droppable
//! sections are removed in ascending priority until it fits, and the bundle's
//! manifest records the fate of every section. The core a prompt can never
//! lose: task definition, the document itself, the output instruction, and
//! (stage 2) the detection history.

mod templates;

pub use templates::{CotExample, TemplateSet};

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::ontology::{EventTypeDef, Ontology};

/// Prompting variant: plain definition-driven extraction, or the same with
/// chain-of-thought examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptStyle {
    Ddee,
    DdeeCot,
}

impl FromStr for PromptStyle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().replace('_', "-").as_str() {
            "ddee" => Ok(PromptStyle::Ddee),
            "ddee-cot" => Ok(PromptStyle::DdeeCot),
            other => Err(format!("unknown prompt style {other:?} (expected ddee or ddee-cot)")),
        }
    }
}

impl fmt::Display for PromptStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptStyle::Ddee => "ddee",
            PromptStyle::DdeeCot => "ddee-cot",
        })
    }
}

/// Length budget for one prompt, counted in chars (provider-agnostic).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBudget {
    /// `None` means unlimited.
    pub max_chars: Option<usize>,
}

impl PromptBudget {
    pub fn unlimited() -> Self {
        PromptBudget { max_chars: None }
    }

    pub fn limited(max_chars: usize) -> Self {
        PromptBudget {
            max_chars: Some(max_chars),
        }
    }
}

pub use crate::outparse::DetectionRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SectionStatus {
    Included,
    Dropped,
    Truncated,
}

/// Fate of one template section in an assembled prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionDisposition {
    pub name: String,
    pub status: SectionStatus,
}

/// A fully assembled prompt plus the audit trail of its sections.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub manifest: Vec<SectionDisposition>,
}

/// One candidate section before budgeting.
#[derive(Debug, Clone)]
pub struct Section {
    pub name: String,
    pub text: String,
    /// `None` marks core sections that can never drop. Droppables go in
    /// ascending priority: 0 first.
    pub priority: Option<u8>,
    /// Tie-break among equal priorities: lower rank drops first.
    pub drop_rank: u32,
    /// Whether the section lands in the user message (vs. system).
    pub in_user: bool,
}

impl Section {
    fn core(name: &str, text: String, in_user: bool) -> Section {
        Section {
            name: name.to_string(),
            text,
            priority: None,
            drop_rank: 0,
            in_user,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("prompt budget {max_chars} chars is below the non-droppable core ({core_chars} chars)")]
    BudgetTooSmall { max_chars: usize, core_chars: usize },
    #[error("event type {name:?} is not in the ontology")]
    UnknownEventType { name: String },
    #[error("style ddee-cot requires at least one chain-of-thought example usable under this ontology")]
    NoCotExamples,
    #[error("argument prompts require at least one detection")]
    NoDetections,
    #[error("the ontology has no event types")]
    EmptyOntology,
    #[error("template {name}: {detail}")]
    Template { name: String, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

const SECTION_SEPARATOR: &str = "\n\n";

fn assembled_chars(sections: &[Section], included: &[bool], lens: &[usize]) -> usize {
    let mut total = 0usize;
    for user_side in [false, true] {
        let mut count = 0usize;
        for (i, section) in sections.iter().enumerate() {
            if included[i] && section.in_user == user_side {
                total += lens[i];
                count += 1;
            }
        }
        if count > 1 {
            total += (count - 1) * SECTION_SEPARATOR.len();
        }
    }
    total
}

/// Decide which sections stay under the budget. Droppables go one at a time
/// in ascending (priority, drop_rank) until the assembled text fits; core
/// sections never drop, and a budget below the bare core is an error.
pub fn shrink_to_budget(
    sections: &[Section],
    budget: &PromptBudget,
) -> Result<Vec<SectionStatus>, PromptError> {
    let mut included = vec![true; sections.len()];
    let Some(max_chars) = budget.max_chars else {
        return Ok(vec![SectionStatus::Included; sections.len()]);
    };
    let lens: Vec<usize> = sections.iter().map(|s| s.text.chars().count()).collect();

    while assembled_chars(sections, &included, &lens) > max_chars {
        let victim = sections
            .iter()
            .enumerate()
            .filter(|(i, s)| included[*i] && s.priority.is_some())
            .min_by_key(|(i, s)| (s.priority.unwrap(), s.drop_rank, *i))
            .map(|(i, _)| i);
        match victim {
            Some(i) => included[i] = false,
            None => {
                return Err(PromptError::BudgetTooSmall {
                    max_chars,
                    core_chars: assembled_chars(sections, &included, &lens),
                })
            }
        }
    }
    Ok(included
        .into_iter()
        .map(|inc| {
            if inc {
                SectionStatus::Included
            } else {
                SectionStatus::Dropped
            }
        })
        .collect())
}

fn assemble(sections: Vec<Section>, budget: &PromptBudget) -> Result<PromptBundle, PromptError> {
    let statuses = shrink_to_budget(&sections, budget)?;
    let mut system_parts = Vec::new();
    let mut user_parts = Vec::new();
    let mut manifest = Vec::with_capacity(sections.len());
    for (section, status) in sections.into_iter().zip(&statuses) {
        if *status == SectionStatus::Included {
            if section.in_user {
                user_parts.push(section.text);
            } else {
                system_parts.push(section.text);
            }
        }
        manifest.push(SectionDisposition {
            name: section.name,
            status: *status,
        });
    }
    Ok(PromptBundle {
        system_text: system_parts.join(SECTION_SEPARATOR),
        user_text: user_parts.join(SECTION_SEPARATOR),
        manifest,
    })
}

/// Ranks for definition sections: the least frequent type drops first, ties
/// broken by name, so prompts keep the definitions that matter most.
fn definition_drop_ranks(type_defs: &[&EventTypeDef]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..type_defs.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = type_defs[a].frequency.unwrap_or(0);
        let fb = type_defs[b].frequency.unwrap_or(0);
        fa.cmp(&fb).then_with(|| type_defs[a].name.cmp(&type_defs[b].name))
    });
    let mut ranks = vec![0u32; type_defs.len()];
    for (rank, idx) in order.into_iter().enumerate() {
        ranks[idx] = rank as u32;
    }
    ranks
}

/// Does this worked example stay inside the ontology's closed domain? The
/// answer's event types must exist, and any argument roles must belong to
/// their type.
fn example_in_domain(example: &CotExample, ontology: &Ontology) -> bool {
    let records: Vec<&serde_json::Value> = match &example.answer {
        serde_json::Value::Array(items) => items.iter().collect(),
        obj @ serde_json::Value::Object(_) => vec![obj],
        _ => return false,
    };
    for record in records {
        let Some(type_name) = record["event_type"].as_str() else {
            return false;
        };
        let Some(type_def) = ontology.event_type(type_name) else {
            return false;
        };
        if let Some(args) = record["arguments"].as_array() {
            for arg in args {
                let Some(role) = arg["role"].as_str() else {
                    return false;
                };
                if type_def.role(role).is_none() {
                    return false;
                }
            }
        }
    }
    true
}

fn render_example(example: &CotExample, index: usize, with_steps: bool) -> String {
    let mut text = format!("Example {}:\nDocument:\n{}\n", index + 1, example.input);
    if with_steps && !example.steps.is_empty() {
        text.push_str("Reasoning:\n");
        for (i, step) in example.steps.iter().enumerate() {
            text.push_str(&format!("{}. {step}\n", i + 1));
        }
    }
    text.push_str("Answer:\n");
    text.push_str(&serde_json::to_string(&example.answer).expect("example answer serializes"));
    text
}

/// The style's example sections, filtered to the ontology's domain.
fn example_sections(
    style: PromptStyle,
    stage: Stage,
    ontology: &Ontology,
    templates: &TemplateSet,
) -> Result<Vec<Section>, PromptError> {
    let (file, label, priority, with_steps) = match (style, stage) {
        (PromptStyle::Ddee, Stage::Detection) => ("icl_detection", "icl-example", 1, false),
        (PromptStyle::Ddee, Stage::Argument) => ("icl_argument", "icl-example", 1, false),
        (PromptStyle::DdeeCot, Stage::Detection) => ("cot_detection", "cot-example", 0, true),
        (PromptStyle::DdeeCot, Stage::Argument) => ("cot_argument", "cot-example", 0, true),
    };
    let usable: Vec<&CotExample> = templates
        .examples(file)
        .iter()
        .filter(|ex| example_in_domain(ex, ontology))
        .collect();
    if style == PromptStyle::DdeeCot && usable.is_empty() {
        return Err(PromptError::NoCotExamples);
    }
    Ok(usable
        .into_iter()
        .enumerate()
        .map(|(i, ex)| Section {
            name: format!("{label}:{i}"),
            text: render_example(ex, i, with_steps),
            priority: Some(priority),
            drop_rank: i as u32,
            in_user: false,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Detection,
    Argument,
}

fn document_section(doc: &Document) -> Section {
    Section::core(
        "document",
        format!("Document (doc_id: {}):\n{}", doc.doc_id, doc.text),
        true,
    )
}

fn type_catalog_entry(type_def: &EventTypeDef) -> String {
    let mut text = format!("Event type: {}", type_def.name);
    if !type_def.definition.is_empty() {
        text.push_str(&format!("\nDefinition: {}", type_def.definition));
    }
    if !type_def.trigger_definition.is_empty() {
        text.push_str(&format!("\nTrigger definition: {}", type_def.trigger_definition));
    }
    text
}

fn role_catalog_entry(type_def: &EventTypeDef) -> String {
    let mut text = format!("Event type: {}\nRoles:", type_def.name);
    for role in &type_def.roles {
        if role.definition.is_empty() {
            text.push_str(&format!("\n- {}", role.name));
        } else {
            text.push_str(&format!("\n- {}: {}", role.name, role.definition));
        }
    }
    text
}

/// Build the stage-1 prompt: task definition, extraction rules, the event
/// type catalog, worked examples per style, then the document and the output
/// instruction mandating `{doc_id, event_type, trigger}` records.
pub fn build_detection_prompt(
    doc: &Document,
    ontology: &Ontology,
    style: PromptStyle,
    budget: &PromptBudget,
    templates: &TemplateSet,
) -> Result<PromptBundle, PromptError> {
    if ontology.is_empty() {
        return Err(PromptError::EmptyOntology);
    }

    let mut sections = Vec::new();
    sections.push(Section::core(
        "task-definition",
        templates.render("detection_task", &[])?,
        false,
    ));
    sections.push(Section {
        name: "extraction-rules".to_string(),
        text: templates.render("detection_rules", &[])?,
        priority: Some(3),
        drop_rank: 0,
        in_user: false,
    });

    let type_defs: Vec<&EventTypeDef> = ontology.event_types.iter().collect();
    let ranks = definition_drop_ranks(&type_defs);
    for (type_def, rank) in type_defs.iter().zip(ranks) {
        sections.push(Section {
            name: format!("type-definition:{}", type_def.name),
            text: type_catalog_entry(type_def),
            priority: Some(2),
            drop_rank: rank,
            in_user: false,
        });
    }

    sections.extend(example_sections(style, Stage::Detection, ontology, templates)?);
    sections.push(document_section(doc));

    let type_names: Vec<&str> = ontology.type_names().collect();
    sections.push(Section::core(
        "output-instruction",
        templates.render(
            "detection_output",
            &[("doc_id", doc.doc_id.as_str()), ("type_names", &type_names.join(", "))],
        )?,
        true,
    ));

    assemble(sections, budget)
}

/// Build the stage-2 prompt: the detection history verbatim, role catalogs
/// for exactly the detected types, and the output instruction mandating
/// `{event_type, trigger, arguments:[{role, text}]}` records.
pub fn build_argument_prompt(
    doc: &Document,
    detected: &[DetectionRecord],
    ontology: &Ontology,
    style: PromptStyle,
    budget: &PromptBudget,
    templates: &TemplateSet,
) -> Result<PromptBundle, PromptError> {
    if detected.is_empty() {
        return Err(PromptError::NoDetections);
    }
    let mut detected_types = BTreeSet::new();
    for record in detected {
        if ontology.event_type(&record.event_type).is_none() {
            return Err(PromptError::UnknownEventType {
                name: record.event_type.clone(),
            });
        }
        detected_types.insert(record.event_type.as_str());
    }

    let mut sections = Vec::new();
    sections.push(Section::core(
        "task-definition",
        templates.render("argument_task", &[])?,
        false,
    ));
    sections.push(Section {
        name: "extraction-rules".to_string(),
        text: templates.render("argument_rules", &[])?,
        priority: Some(3),
        drop_rank: 0,
        in_user: false,
    });

    // role catalogs for detected types only, each included once
    let type_defs: Vec<&EventTypeDef> = ontology
        .event_types
        .iter()
        .filter(|t| detected_types.contains(t.name.as_str()))
        .collect();
    let ranks = definition_drop_ranks(&type_defs);
    for (type_def, rank) in type_defs.iter().zip(ranks) {
        sections.push(Section {
            name: format!("role-catalog:{}", type_def.name),
            text: role_catalog_entry(type_def),
            priority: Some(2),
            drop_rank: rank,
            in_user: false,
        });
    }

    sections.extend(example_sections(style, Stage::Argument, ontology, templates)?);
    sections.push(document_section(doc));

    let mut history = String::from("Identified event types and triggers:");
    for record in detected {
        history.push_str(&format!(
            "\n- event_type: {}, trigger: \"{}\"",
            record.event_type, record.trigger_text
        ));
    }
    sections.push(Section::core("detection-history", history, true));

    let inventory: Vec<String> = type_defs
        .iter()
        .map(|t| {
            let roles: Vec<&str> = t.roles.iter().map(|r| r.name.as_str()).collect();
            format!("- {}: {}", t.name, roles.join(", "))
        })
        .collect();
    sections.push(Section::core(
        "output-instruction",
        templates.render("argument_output", &[("role_inventory", &inventory.join("\n"))])?,
        true,
    ));

    assemble(sections, budget)
}
