//! ICD-10-CM coding toolkit: hierarchy graphs, candidate expansion,
//! model-backed code revision, and hierarchy-aware evaluation.
//!
//! The crate is organized around the shape of the coding workflow:
//!
//! - [`icd_graph`] parses the official tabular list into a tree and the
//!   index list into an undirected cross-reference graph, and answers
//!   relation queries (siblings, cousins, 1/2-hop neighbors, ancestors).
//! - [`expansion`] turns a single predicted code into a candidate set by
//!   taking unions of those relations.
//! - [`prompting`] renders generation / revision / binary-verification
//!   prompts from a versioned template catalog and parses model output
//!   back into codes or option choices.
//! - [`gateway`] is the uniform completion interface: mock backends for
//!   tests, a generic HTTP backend for real runs, and a JSON-Lines
//!   response cache.
//! - [`corpus`] loads and validates the annotated note corpus.
//! - [`metrics`] implements exact and prefix-relaxed precision/recall/F1,
//!   the prefix overlap ratio, and verification accuracy, all in exact
//!   rational arithmetic.
//! - [`pipeline`] orchestrates generate -> expand -> revise runs, oracle
//!   selection, and the standalone verification task.
//! - [`synth`] builds deterministic synthetic trees, graphs, and corpora
//!   for tests and benchmarks.
//!
//! Batch entry points (`expand_many`, `evaluate_notes`, pipeline runs) are
//! data-parallel via rayon when the `parallel` feature (default) is
//! enabled; every one of them has a `_seq` twin that is always available.

pub mod corpus;
pub mod expansion;
pub mod gateway;
pub mod icd_graph;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod prompting;
pub mod synth;

pub use icd_graph::{CodeId, CodeKind, CodeNode, IndexGraph, TabularTree};
