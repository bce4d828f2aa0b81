//! Definition-driven document-level event extraction.
//!
//! The pipeline runs in two prompting stages against a chat-completion
//! model: event detection (trigger plus type) over a whole document, then
//! argument extraction conditioned verbatim on the detected events. Both
//! stages draw on an ontology of event types whose natural-language
//! definitions can themselves be LLM-generated from gold annotations.
//!
//! Module map:
//! - [`corpus`]: document model with char-offset spans, ingestion, stats
//! - [`ontology`]: event-type registry and definition generation
//! - [`balancer`]: long-tail resampling of evaluation corpora
//! - [`prompting`]: budgeted two-stage prompt construction
//! - [`llm`]: provider-agnostic client with retry, cache, and replay
//! - [`outparse`]: tolerant parsing and grounding of model output
//! - [`pipeline`]: run orchestration, run directories, prediction files
//! - [`evaluator`]: trigger and argument F1 scoring and reports
//!
//! All offsets throughout are counted in Unicode scalar values (chars),
//! half-open `[start, end)`.

pub mod balancer;
pub mod corpus;
pub mod evaluator;
pub mod llm;
pub mod ontology;
pub mod outparse;
pub mod pipeline;
pub mod prompting;
pub mod text;
