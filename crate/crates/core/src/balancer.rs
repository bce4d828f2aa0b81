//! Long-tail resampling.
//!
//! Event types in document-level corpora are unevenly distributed; scoring
//! on the raw distribution mostly measures the head. The balancer builds an
//! evaluation set with (near-)equal mention counts per type: majority types
//! are undersampled without replacement, minority types oversampled with
//! replacement, and every choice is a pure function of the histogram and the
//! seed. The sampling unit is the event mention, so each sampled document
//! instance carries exactly one event.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample as sample_without_replacement;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Split};

/// Identity of the sampling algorithm, recorded in every plan so a plan file
/// is only replayed against the generator that wrote it.
pub const GENERATOR_ID: &str = "chacha8-v1";

/// Points at one event mention in a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionRef {
    pub doc_id: String,
    pub event_index: usize,
}

/// Event mentions grouped by type, in corpus order.
pub type TypeHistogram = BTreeMap<String, Vec<MentionRef>>;

/// Group a corpus's event mentions by type.
pub fn type_histogram(corpus: &Corpus) -> TypeHistogram {
    let mut hist = TypeHistogram::new();
    for doc in &corpus.documents {
        for (event_index, event) in doc.events.iter().enumerate() {
            hist.entry(event.event_type.clone())
                .or_default()
                .push(MentionRef {
                    doc_id: doc.doc_id.clone(),
                    event_index,
                });
        }
    }
    hist
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceConfig {
    /// Desired mention count per event type.
    pub target_per_type: usize,
    pub seed: u64,
    /// Optional cap on total sampled mentions; slots are granted round-robin
    /// across types (sorted by name) so per-type counts differ by at most one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_total: Option<usize>,
}

/// One sampled mention. `duplicated` marks draws beyond a type's population,
/// i.e. oversampling copies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub doc_id: String,
    pub event_index: usize,
    pub duplicated: bool,
}

/// The full, replayable sampling decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancePlan {
    pub config: BalanceConfig,
    pub generator: String,
    pub selections: BTreeMap<String, Vec<Selection>>,
}

impl BalancePlan {
    pub fn total_selected(&self) -> usize {
        self.selections.values().map(Vec::len).sum()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BalanceError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed plan file: {0}")]
    Malformed(String),
    #[error("plan references doc {doc_id:?} event {event_index}, which the corpus does not have")]
    DanglingReference { doc_id: String, event_index: usize },
    #[error("plan was written by generator {found:?}, this build implements {GENERATOR_ID:?}")]
    GeneratorMismatch { found: String },
}

/// How many mentions each type may receive: `target_per_type` each, unless
/// `max_total` runs out while slots are granted one per type per round.
fn allowances(type_count: usize, config: &BalanceConfig) -> Vec<usize> {
    let mut allow = vec![0usize; type_count];
    let mut total = 0usize;
    loop {
        let mut progressed = false;
        for slot in allow.iter_mut() {
            if *slot >= config.target_per_type {
                continue;
            }
            if let Some(cap) = config.max_total {
                if total >= cap {
                    return allow;
                }
            }
            *slot += 1;
            total += 1;
            progressed = true;
        }
        if !progressed {
            return allow;
        }
    }
}

/// Decide which mentions the balanced corpus will contain. Pure in
/// (histogram, config): one ChaCha8 stream seeded from the config drives all
/// types in name order.
pub fn plan_balance(hist: &TypeHistogram, config: &BalanceConfig) -> BalancePlan {
    assert!(config.target_per_type >= 1, "target_per_type must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let populated: Vec<(&String, &Vec<MentionRef>)> =
        hist.iter().filter(|(_, v)| !v.is_empty()).collect();
    let allow = allowances(populated.len(), config);

    let mut selections = BTreeMap::new();
    for ((type_name, instances), want) in populated.into_iter().zip(allow) {
        if want == 0 {
            continue;
        }
        let population = instances.len();
        let mut picked = Vec::with_capacity(want);
        if population >= want {
            // undersample: uniform without replacement, kept in corpus order
            let mut indices = sample_without_replacement(&mut rng, population, want).into_vec();
            indices.sort_unstable();
            for i in indices {
                picked.push(Selection {
                    doc_id: instances[i].doc_id.clone(),
                    event_index: instances[i].event_index,
                    duplicated: false,
                });
            }
        } else {
            // oversample: everything once, then uniform draws with replacement
            for m in instances {
                picked.push(Selection {
                    doc_id: m.doc_id.clone(),
                    event_index: m.event_index,
                    duplicated: false,
                });
            }
            for _ in population..want {
                let i = rng.gen_range(0..population);
                picked.push(Selection {
                    doc_id: instances[i].doc_id.clone(),
                    event_index: instances[i].event_index,
                    duplicated: true,
                });
            }
        }
        selections.insert(type_name.clone(), picked);
    }

    BalancePlan {
        config: config.clone(),
        generator: GENERATOR_ID.to_string(),
        selections,
    }
}

/// Materialize a plan: one single-event document per selection. Repeated
/// visits to the same source document get an ordinal suffix (`doc#2`,
/// `doc#3`, ...) so doc_ids stay unique; every output document records its
/// source in `provenance`.
pub fn apply_balance(corpus: &Corpus, plan: &BalancePlan) -> Result<Corpus, BalanceError> {
    let by_id: BTreeMap<&str, &Document> = corpus
        .documents
        .iter()
        .map(|d| (d.doc_id.as_str(), d))
        .collect();

    let mut uses: BTreeMap<&str, usize> = BTreeMap::new();
    let mut documents = Vec::with_capacity(plan.total_selected());
    for picked in plan.selections.values() {
        for sel in picked {
            let source = by_id.get(sel.doc_id.as_str()).copied().ok_or_else(|| {
                BalanceError::DanglingReference {
                    doc_id: sel.doc_id.clone(),
                    event_index: sel.event_index,
                }
            })?;
            let event = source.events.get(sel.event_index).ok_or_else(|| {
                BalanceError::DanglingReference {
                    doc_id: sel.doc_id.clone(),
                    event_index: sel.event_index,
                }
            })?;

            let ordinal = uses.entry(source.doc_id.as_str()).or_insert(0);
            *ordinal += 1;
            let doc_id = if *ordinal == 1 {
                source.doc_id.clone()
            } else {
                format!("{}#{}", source.doc_id, ordinal)
            };

            let arguments = source
                .arguments
                .iter()
                .filter(|a| a.event_index == sel.event_index)
                .map(|a| {
                    let mut a = a.clone();
                    a.event_index = 0;
                    a
                })
                .collect();
            documents.push(Document {
                doc_id,
                text: source.text.clone(),
                sentence_bounds: source.sentence_bounds.clone(),
                events: vec![event.clone()],
                arguments,
                provenance: Some(source.doc_id.clone()),
            });
        }
    }
    Ok(Corpus::new(Split::Custom, documents))
}

pub fn save_plan(plan: &BalancePlan, path: &Path) -> Result<(), BalanceError> {
    let mut content = serde_json::to_string_pretty(plan).expect("plan serializes");
    content.push('\n');
    std::fs::write(path, content).map_err(|source| BalanceError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_plan(path: &Path) -> Result<BalancePlan, BalanceError> {
    let content = std::fs::read_to_string(path).map_err(|source| BalanceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let plan: BalancePlan = serde_json::from_str(&content)
        .map_err(|e| BalanceError::Malformed(format!("{}: {e}", path.display())))?;
    if plan.generator != GENERATOR_ID {
        return Err(BalanceError::GeneratorMismatch {
            found: plan.generator,
        });
    }
    Ok(plan)
}
