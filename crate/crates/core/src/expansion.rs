//! Candidate expansion: turn one predicted code into the union of its
//! siblings, cousins, and 1/2-hop index-graph neighbors, deduplicated
//! with per-candidate relation provenance.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::icd_graph::{CodeId, GraphError, Hops, IndexGraph, TabularTree};

#[derive(Debug, Error)]
pub enum ExpandError {
    #[error("unknown seed code {0}")]
    UnknownSeed(CodeId),
    #[error("expansion config selects no relations and excludes the seed")]
    EmptyConfig,
    #[error("max_candidates must be at least 1 when set")]
    ZeroMaxCandidates,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Which relation sets feed the union, and how the result is filtered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpansionConfig {
    pub use_siblings: bool,
    pub use_cousins: bool,
    pub use_n1: bool,
    pub use_n2: bool,
    pub include_seed: bool,
    pub billable_only: bool,
    pub max_candidates: Option<usize>,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig {
            use_siblings: true,
            use_cousins: true,
            use_n1: true,
            use_n2: true,
            include_seed: true,
            billable_only: true,
            max_candidates: None,
        }
    }
}

impl ExpansionConfig {
    pub fn siblings_only() -> Self {
        ExpansionConfig {
            use_siblings: true,
            use_cousins: false,
            use_n1: false,
            use_n2: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ExpandError> {
        let any_relation = self.use_siblings || self.use_cousins || self.use_n1 || self.use_n2;
        if !any_relation && !self.include_seed {
            return Err(ExpandError::EmptyConfig);
        }
        if self.max_candidates == Some(0) {
            return Err(ExpandError::ZeroMaxCandidates);
        }
        Ok(())
    }
}

/// How a candidate entered the set. A candidate reachable through several
/// relations carries every tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Seed,
    Sibling,
    Cousin,
    N1,
    N2,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub code: CodeId,
    pub why: BTreeSet<Provenance>,
}

/// Expansion output for one seed, sorted ascending by code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub seed: CodeId,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn codes(&self) -> impl Iterator<Item = &CodeId> {
        self.candidates.iter().map(|c| &c.code)
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn contains(&self, code: &CodeId) -> bool {
        self.candidates.iter().any(|c| &c.code == code)
    }
}

pub fn expand(
    tree: &TabularTree,
    graph: &IndexGraph,
    seed: &CodeId,
    cfg: &ExpansionConfig,
) -> Result<CandidateSet, ExpandError> {
    cfg.validate()?;
    if !tree.contains(seed) {
        return Err(ExpandError::UnknownSeed(seed.clone()));
    }

    let mut merged: BTreeMap<CodeId, BTreeSet<Provenance>> = BTreeMap::new();
    let mut absorb = |codes: BTreeSet<CodeId>, tag: Provenance| {
        for code in codes {
            merged.entry(code).or_default().insert(tag);
        }
    };

    if cfg.use_siblings {
        absorb(tree.siblings(seed)?, Provenance::Sibling);
    }
    if cfg.use_cousins {
        absorb(tree.cousins(seed)?, Provenance::Cousin);
    }
    if cfg.use_n1 {
        absorb(graph.neighbors(seed, Hops::One), Provenance::N1);
    }
    if cfg.use_n2 {
        absorb(graph.neighbors(seed, Hops::Two), Provenance::N2);
    }

    // Dedup happened in the union above; the billable filter comes second.
    if cfg.billable_only {
        merged.retain(|code, _| tree.is_billable(code));
    }

    // The relation sets never contain the seed itself, so inclusion is
    // purely the config's choice. The seed bypasses the billable filter:
    // revision must always be allowed to keep the original prediction.
    if cfg.include_seed {
        merged
            .entry(seed.clone())
            .or_default()
            .insert(Provenance::Seed);
    }

    let mut candidates: Vec<Candidate> = merged
        .into_iter()
        .map(|(code, why)| Candidate { code, why })
        .collect();

    if let Some(limit) = cfg.max_candidates {
        if candidates.len() > limit {
            let seed_kept = candidates[..limit].iter().any(|c| &c.code == seed);
            candidates.truncate(limit);
            if cfg.include_seed && !seed_kept {
                // Keep the guarantee that the seed is always an option.
                candidates.pop();
                candidates.push(Candidate {
                    code: seed.clone(),
                    why: BTreeSet::from([Provenance::Seed]),
                });
                candidates.sort_by(|a, b| a.code.cmp(&b.code));
            }
        }
    }

    if candidates.is_empty() {
        tracing::warn!(seed = %seed, "expansion produced an empty candidate set");
    }

    Ok(CandidateSet {
        seed: seed.clone(),
        candidates,
    })
}

/// Expand many seeds sequentially. Errors are reported per seed.
pub fn expand_many_seq(
    tree: &TabularTree,
    graph: &IndexGraph,
    seeds: &[CodeId],
    cfg: &ExpansionConfig,
) -> Vec<Result<CandidateSet, ExpandError>> {
    seeds.iter().map(|s| expand(tree, graph, s, cfg)).collect()
}

/// Expand many seeds, in parallel when the `parallel` feature is enabled.
pub fn expand_many(
    tree: &TabularTree,
    graph: &IndexGraph,
    seeds: &[CodeId],
    cfg: &ExpansionConfig,
) -> Vec<Result<CandidateSet, ExpandError>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        seeds
            .par_iter()
            .map(|s| expand(tree, graph, s, cfg))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        expand_many_seq(tree, graph, seeds, cfg)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SizeRow {
    pub seed: CodeId,
    pub candidates: usize,
    /// |candidates| / |billable codes in the tree|.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SizeReport {
    pub billable_total: usize,
    pub rows: Vec<SizeRow>,
    pub median_ratio: f64,
}

/// Candidate-set sizes per seed, as counts and as a fraction of the
/// billable code list. Meaningful ratios need a tree parsed from the full
/// official file; on fixtures the ratio is still computed but only
/// describes the fixture.
pub fn expansion_size_report(
    tree: &TabularTree,
    graph: &IndexGraph,
    seeds: &[CodeId],
    cfg: &ExpansionConfig,
) -> Result<SizeReport, ExpandError> {
    let billable_total = tree.billable_count();
    let mut rows = Vec::with_capacity(seeds.len());
    for result in expand_many(tree, graph, seeds, cfg) {
        let set = result?;
        let size = set.len();
        let ratio = if billable_total == 0 {
            0.0
        } else {
            size as f64 / billable_total as f64
        };
        rows.push(SizeRow {
            seed: set.seed,
            candidates: size,
            ratio,
        });
    }
    let mut ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    ratios.sort_by(|a, b| a.partial_cmp(b).expect("ratios are finite"));
    let median_ratio = if ratios.is_empty() {
        0.0
    } else {
        ratios[ratios.len() / 2]
    };
    Ok(SizeReport {
        billable_total,
        rows,
        median_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::icd_graph::{parse_index_tsv, parse_tabular_tsv};

    fn code(s: &str) -> CodeId {
        CodeId::new(s).unwrap()
    }

    fn knee_tree() -> TabularTree {
        parse_tabular_tsv(
            "M25\t\tOther joint disorder, not elsewhere classified\tcategory\n\
             M255\tM25\tPain in joint\tsubcategory\n\
             M2556\tM255\tPain in knee\tsubcategory\n\
             M25561\tM2556\tPain in right knee\tsubcategory\n\
             M25562\tM2556\tPain in left knee\tsubcategory\n\
             M25569\tM2556\tPain in unspecified knee\tsubcategory\n"
                .as_bytes(),
        )
        .unwrap()
    }

    #[test]
    fn siblings_only_contains_seed_and_sibling() {
        let tree = knee_tree();
        let graph = IndexGraph::new();
        let cfg = ExpansionConfig::siblings_only();
        let set = expand(&tree, &graph, &code("M25.561"), &cfg).unwrap();
        assert!(set.contains(&code("M25561")));
        assert!(set.contains(&code("M25562")));
        assert!(set.contains(&code("M25569")));
        assert_eq!(set.len(), 3);
    }

    #[test]
    fn no_relations_yields_exactly_the_seed() {
        let tree = knee_tree();
        let graph = IndexGraph::new();
        let cfg = ExpansionConfig {
            use_siblings: false,
            use_cousins: false,
            use_n1: false,
            use_n2: false,
            ..Default::default()
        };
        let set = expand(&tree, &graph, &code("M25561"), &cfg).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.candidates[0].code, code("M25561"));
        assert_eq!(
            set.candidates[0].why,
            BTreeSet::from([Provenance::Seed])
        );
    }

    #[test]
    fn all_flags_off_without_seed_is_config_error() {
        let cfg = ExpansionConfig {
            use_siblings: false,
            use_cousins: false,
            use_n1: false,
            use_n2: false,
            include_seed: false,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(ExpandError::EmptyConfig)));
    }

    #[test]
    fn unknown_seed_is_an_error() {
        let tree = knee_tree();
        let graph = IndexGraph::new();
        assert!(matches!(
            expand(&tree, &graph, &code("Z999"), &ExpansionConfig::default()),
            Err(ExpandError::UnknownSeed(_))
        ));
    }

    #[test]
    fn billable_only_filters_non_leaves_and_graph_only_codes() {
        let tree = knee_tree();
        // M2556 is a parent (non-billable); Q999 is not in the tree at all.
        let parsed = parse_index_tsv(
            "M25561\tM2556\nM25561\tQ999\nM25561\tM25562\n".as_bytes(),
        )
        .unwrap();
        let cfg = ExpansionConfig {
            use_siblings: false,
            use_cousins: false,
            use_n2: false,
            ..Default::default()
        };
        let set = expand(&tree, &parsed.graph, &code("M25561"), &cfg).unwrap();
        let codes: Vec<&CodeId> = set.codes().collect();
        assert_eq!(codes, vec![&code("M25561"), &code("M25562")]);
    }

    #[test]
    fn provenance_merges_across_relations() {
        let tree = knee_tree();
        let parsed = parse_index_tsv("M25561\tM25562\n".as_bytes()).unwrap();
        let cfg = ExpansionConfig {
            use_cousins: false,
            use_n2: false,
            ..Default::default()
        };
        let set = expand(&tree, &parsed.graph, &code("M25561"), &cfg).unwrap();
        let left = set
            .candidates
            .iter()
            .find(|c| c.code == code("M25562"))
            .unwrap();
        assert_eq!(
            left.why,
            BTreeSet::from([Provenance::Sibling, Provenance::N1])
        );
    }

    #[test]
    fn truncation_keeps_sorted_order_and_the_seed() {
        let tree = knee_tree();
        let graph = IndexGraph::new();
        let cfg = ExpansionConfig {
            max_candidates: Some(2),
            ..ExpansionConfig::siblings_only()
        };
        // Sorted candidates are M25561, M25562, M25569; the seed M25569
        // sorts last and must survive truncation.
        let set = expand(&tree, &graph, &code("M25569"), &cfg).unwrap();
        assert_eq!(set.len(), 2);
        assert!(set.contains(&code("M25569")));
        let codes: Vec<&CodeId> = set.codes().collect();
        let mut sorted = codes.clone();
        sorted.sort();
        assert_eq!(codes, sorted);
    }

    #[test]
    fn seed_only_ratio_is_one_over_billable() {
        let tree = knee_tree();
        let graph = IndexGraph::new();
        let cfg = ExpansionConfig {
            use_siblings: false,
            use_cousins: false,
            use_n1: false,
            use_n2: false,
            ..Default::default()
        };
        let report =
            expansion_size_report(&tree, &graph, &[code("M25561")], &cfg).unwrap();
        assert_eq!(report.billable_total, 3);
        assert_eq!(report.rows[0].candidates, 1);
        assert!((report.rows[0].ratio - 1.0 / 3.0).abs() < 1e-12);
    }
}
