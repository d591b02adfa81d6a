//! Property tests checking the fast implementations against the
//! reference definition scans, plus the cross-module invariants.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use proptest::prelude::*;
use rand::Rng;

use icdverify::expansion::{expand, ExpansionConfig};
use icdverify::icd_graph::{
    parse_tabular_tsv, write_tabular_tsv, CodeId, Hops, IndexGraph, TabularTree,
};
use icdverify::metrics::{exact_prf, por, prefix_prf, score_note};
use icdverify::oracle;
use icdverify::prompting::{parse_choice_response, parse_generation_response, render_generation_json};
use icdverify::synth::{billable_codes, rng, sample_codes, synth_tree};

fn random_edges(seed: u64, codes: &[CodeId], count: usize) -> Vec<(CodeId, CodeId)> {
    let mut r = rng(seed);
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    let mut attempts = 0;
    while edges.len() < count && attempts < count * 20 {
        attempts += 1;
        let a = codes[r.gen_range(0..codes.len())].clone();
        let b = codes[r.gen_range(0..codes.len())].clone();
        if a == b {
            continue;
        }
        let key = if a < b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        };
        if seen.insert(key) {
            edges.push((a, b));
        }
    }
    edges
}

fn graph_from(edges: &[(CodeId, CodeId)]) -> IndexGraph {
    let mut graph = IndexGraph::new();
    for (a, b) in edges {
        graph.add_edge(a.clone(), b.clone());
    }
    graph
}

#[test]
fn relations_match_definition_scans_on_random_instances() {
    for instance in 0..10u64 {
        let tree = synth_tree(100 + instance, 400);
        let all: Vec<CodeId> = tree.nodes().map(|n| n.id.clone()).collect();
        let edges = random_edges(200 + instance, &all, 600);
        let graph = graph_from(&edges);

        let mut r = rng(300 + instance);
        for _ in 0..40 {
            let c = &all[r.gen_range(0..all.len())];
            assert_eq!(
                tree.siblings(c).unwrap(),
                oracle::siblings_scan(&tree, c),
                "siblings mismatch for {c}"
            );
            assert_eq!(
                tree.cousins(c).unwrap(),
                oracle::cousins_scan(&tree, c),
                "cousins mismatch for {c}"
            );
            assert_eq!(
                graph.neighbors(c, Hops::One),
                oracle::n1_scan(&edges, c),
                "n1 mismatch for {c}"
            );
            assert_eq!(
                graph.neighbors(c, Hops::Two),
                oracle::n2_scan(&edges, c),
                "n2 mismatch for {c}"
            );
            // BFS bounds from the spec.
            let bfs1 = oracle::bfs_within(&edges, c, 1);
            let bfs2 = oracle::bfs_within(&edges, c, 2);
            assert!(graph.neighbors(c, Hops::One).is_subset(&bfs1));
            assert!(graph.neighbors(c, Hops::Two).is_subset(&bfs2));
        }
    }
}

#[test]
fn sibling_and_cousin_relations_are_symmetric_and_disjoint() {
    let tree = synth_tree(7, 500);
    let all: Vec<CodeId> = tree.nodes().map(|n| n.id.clone()).collect();
    for c in &all {
        let siblings = tree.siblings(c).unwrap();
        for s in &siblings {
            assert!(
                tree.siblings(s).unwrap().contains(c),
                "sibling symmetry broken for {c} / {s}"
            );
        }
        let cousins = tree.cousins(c).unwrap();
        assert!(!cousins.contains(c), "cousins must exclude self");
        assert!(
            cousins.is_disjoint(&siblings),
            "cousins must exclude siblings"
        );
        for g in &cousins {
            assert!(
                tree.cousins(g).unwrap().contains(c),
                "cousin symmetry broken for {c} / {g}"
            );
        }
    }
}

#[test]
fn tabular_tsv_round_trip_on_synthetic_tree() {
    let tree = synth_tree(31, 400);
    let mut buf = Vec::new();
    write_tabular_tsv(&tree, &mut buf).unwrap();
    let reparsed = parse_tabular_tsv(buf.as_slice()).unwrap();
    assert_eq!(tree, reparsed);
}

fn shared_tree() -> &'static TabularTree {
    static TREE: OnceLock<TabularTree> = OnceLock::new();
    TREE.get_or_init(|| synth_tree(42, 500))
}

fn shared_edges() -> &'static Vec<(CodeId, CodeId)> {
    static EDGES: OnceLock<Vec<(CodeId, CodeId)>> = OnceLock::new();
    EDGES.get_or_init(|| {
        let all: Vec<CodeId> = shared_tree().nodes().map(|n| n.id.clone()).collect();
        random_edges(43, &all, 800)
    })
}

fn shared_graph() -> &'static IndexGraph {
    static GRAPH: OnceLock<IndexGraph> = OnceLock::new();
    GRAPH.get_or_init(|| graph_from(shared_edges()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Expansion equals the definition-scan union, and enabling more
    /// relation flags never shrinks the candidate set.
    #[test]
    fn expansion_matches_scan_and_is_monotone(
        seed_index in 0usize..10_000,
        use_siblings in any::<bool>(),
        use_cousins in any::<bool>(),
        use_n1 in any::<bool>(),
        use_n2 in any::<bool>(),
        billable_only in any::<bool>(),
    ) {
        let tree = shared_tree();
        let graph = shared_graph();
        let edges = shared_edges();
        let all: Vec<CodeId> = tree.nodes().map(|n| n.id.clone()).collect();
        let seed = &all[seed_index % all.len()];
        let cfg = ExpansionConfig {
            use_siblings,
            use_cousins,
            use_n1,
            use_n2,
            include_seed: true,
            billable_only,
            max_candidates: None,
        };
        let set = expand(tree, graph, seed, &cfg).unwrap();
        let got: BTreeSet<CodeId> = set.codes().cloned().collect();
        let want = oracle::expand_scan(tree, edges, seed, &cfg);
        prop_assert_eq!(&got, &want);

        // Sorted, duplicate-free, seed present.
        let codes: Vec<&CodeId> = set.codes().collect();
        let mut sorted = codes.clone();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(&codes, &sorted);
        prop_assert!(got.contains(seed));

        // Monotonicity: turn every flag on.
        let full = expand(tree, graph, seed, &ExpansionConfig {
            use_siblings: true,
            use_cousins: true,
            use_n1: true,
            use_n2: true,
            include_seed: true,
            billable_only,
            max_candidates: None,
        }).unwrap();
        let full_set: BTreeSet<CodeId> = full.codes().cloned().collect();
        prop_assert!(got.is_subset(&full_set));

        // Purity: a second call is identical.
        let again = expand(tree, graph, seed, &cfg).unwrap();
        prop_assert_eq!(set, again);
    }

    /// Provenance soundness: every tag on every candidate is backed by
    /// the corresponding definition scan.
    #[test]
    fn expansion_provenance_is_sound(seed_index in 0usize..10_000) {
        use icdverify::expansion::Provenance;
        let tree = shared_tree();
        let graph = shared_graph();
        let edges = shared_edges();
        let all: Vec<CodeId> = tree.nodes().map(|n| n.id.clone()).collect();
        let seed = &all[seed_index % all.len()];
        let cfg = ExpansionConfig {
            billable_only: false,
            ..Default::default()
        };
        let set = expand(tree, graph, seed, &cfg).unwrap();
        let siblings = oracle::siblings_scan(tree, seed);
        let cousins = oracle::cousins_scan(tree, seed);
        let n1 = oracle::n1_scan(edges, seed);
        let n2 = oracle::n2_scan(edges, seed);
        for candidate in &set.candidates {
            for tag in &candidate.why {
                let ok = match tag {
                    Provenance::Seed => candidate.code == *seed,
                    Provenance::Sibling => siblings.contains(&candidate.code),
                    Provenance::Cousin => cousins.contains(&candidate.code),
                    Provenance::N1 => n1.contains(&candidate.code),
                    Provenance::N2 => n2.contains(&candidate.code),
                };
                prop_assert!(ok, "tag {:?} unsupported for {}", tag, candidate.code);
            }
        }
    }

    /// With billable_only, every candidate is a leaf of the tree.
    #[test]
    fn billable_only_returns_leaves(seed_index in 0usize..10_000) {
        let tree = shared_tree();
        let graph = shared_graph();
        let billable = billable_codes(tree);
        let seed = &billable[seed_index % billable.len()];
        let set = expand(tree, graph, seed, &ExpansionConfig::default()).unwrap();
        for candidate in set.codes() {
            let node = tree.node(candidate).unwrap();
            prop_assert!(node.billable);
            prop_assert!(node.children.is_empty());
        }
    }

    /// F1(EM) <= F1(P-1) <= F1(P-2) on random prediction/gold pairs.
    #[test]
    fn prefix_relaxation_is_monotone(case_seed in 0u64..1_000_000) {
        let tree = shared_tree();
        let billable = billable_codes(tree);
        let mut r = rng(case_seed);
        let pred_n = r.gen_range(0..8);
        let gold_n = r.gen_range(0..8);
        let pred: BTreeSet<CodeId> =
            sample_codes(&mut r, &billable, pred_n).into_iter().collect();
        let gold: BTreeSet<CodeId> =
            sample_codes(&mut r, &billable, gold_n).into_iter().collect();
        let em = exact_prf("n", &pred, &gold);
        let p1 = prefix_prf(tree, "n", &pred, &gold, 1).unwrap();
        let p2 = prefix_prf(tree, "n", &pred, &gold, 2).unwrap();
        prop_assert!(em.f1 <= p1.f1, "EM {} > P1 {}", em.f1, p1.f1);
        prop_assert!(p1.f1 <= p2.f1, "P1 {} > P2 {}", p1.f1, p2.f1);
    }

    /// POR is symmetric, bounded, and 1 exactly on equal sets.
    #[test]
    fn por_properties(case_seed in 0u64..1_000_000) {
        use num::{One, Zero};
        let tree = shared_tree();
        let billable = billable_codes(tree);
        let mut r = rng(case_seed);
        let a_n = r.gen_range(0..6);
        let b_n = r.gen_range(0..6);
        let a: BTreeSet<CodeId> =
            sample_codes(&mut r, &billable, a_n).into_iter().collect();
        let b: BTreeSet<CodeId> =
            sample_codes(&mut r, &billable, b_n).into_iter().collect();
        let ab = por(tree, &a, &b).unwrap();
        let ba = por(tree, &b, &a).unwrap();
        prop_assert_eq!(&ab, &ba);
        prop_assert!(ab >= num::BigRational::zero());
        prop_assert!(ab <= num::BigRational::one());
        prop_assert_eq!(ab.is_one(), a == b, "POR=1 iff equal sets; a={:?} b={:?}", a, b);
        prop_assert!(por(tree, &a, &a).unwrap().is_one());
    }

    /// Scoring is invariant under input duplication (set semantics) and
    /// every per-note score stays within [0, 1].
    #[test]
    fn note_scores_are_bounded(case_seed in 0u64..1_000_000) {
        use num::{One, Zero};
        let tree = shared_tree();
        let billable = billable_codes(tree);
        let mut r = rng(case_seed);
        let pred_n = r.gen_range(0..6);
        let gold_n = r.gen_range(0..6);
        let pred: BTreeSet<CodeId> =
            sample_codes(&mut r, &billable, pred_n).into_iter().collect();
        let gold: BTreeSet<CodeId> =
            sample_codes(&mut r, &billable, gold_n).into_iter().collect();
        let scores = score_note(tree, "n", &pred, &gold).unwrap();
        for eval in [&scores.em, &scores.prefix1, &scores.prefix2] {
            prop_assert!(eval.f1 >= num::BigRational::zero());
            prop_assert!(eval.f1 <= num::BigRational::one());
            prop_assert!(eval.precision <= num::BigRational::one());
            prop_assert!(eval.recall <= num::BigRational::one());
        }
    }

    /// The choice parser is total: any input produces Ok or Err, never a
    /// panic, and Ok indices are always in range.
    #[test]
    fn choice_parser_is_total(text in ".*", option_count in 0usize..40) {
        match parse_choice_response(&text, option_count) {
            Ok(index) => prop_assert!(index < option_count),
            Err(_) => {}
        }
    }

    /// The generation parser is total over arbitrary input; when nothing
    /// is extracted it says so in a warning instead of failing.
    #[test]
    fn generation_parser_is_total(text in ".*") {
        let parsed = parse_generation_response(&text);
        if parsed.entries.is_empty() {
            prop_assert!(!parsed.warnings.is_empty());
        }
    }

    /// Rendering predictions into the numbered-JSON shape and re-parsing
    /// recovers the same code list.
    #[test]
    fn generation_json_round_trip(indices in proptest::collection::vec(0usize..10_000, 0..12)) {
        let tree = shared_tree();
        let billable = billable_codes(tree);
        let mut seen = BTreeSet::new();
        let codes: Vec<CodeId> = indices
            .iter()
            .map(|i| billable[i % billable.len()].clone())
            .filter(|c| seen.insert(c.clone()))
            .collect();
        let rendered = render_generation_json(&codes);
        let parsed = parse_generation_response(&rendered);
        prop_assert_eq!(parsed.codes(), codes);
    }
}
