//! `corpus validate`.

use anyhow::{Context, Result};
use serde::Serialize;

use icdverify::corpus::load_corpus_file;

use crate::args::CorpusValidateArgs;
use crate::config::load_graph;

#[derive(Serialize)]
struct ValidationSummary {
    notes: usize,
    split_counts: std::collections::BTreeMap<String, usize>,
    with_candidates: usize,
    no_diagnosis: usize,
    warnings: Vec<String>,
}

pub fn validate(args: CorpusValidateArgs) -> Result<i32> {
    let tree = if args.graph.graph_cache.is_some() || args.graph.tabular.is_some() {
        Some(load_graph(&args.graph)?)
    } else {
        None
    };
    let (corpus, warnings) = load_corpus_file(&args.corpus, tree.as_ref().map(|b| &b.tree))
        .with_context(|| format!("validating {}", args.corpus.display()))?;

    let summary = ValidationSummary {
        notes: corpus.len(),
        split_counts: corpus
            .split_counts()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        with_candidates: corpus
            .notes()
            .iter()
            .filter(|n| n.candidate_codes.is_some())
            .count(),
        no_diagnosis: corpus.notes().iter().filter(|n| n.no_diagnosis).count(),
        warnings,
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(0)
}
