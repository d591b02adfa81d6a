//! Deterministic synthetic trees, graphs, and corpora.
//!
//! Everything here is seeded: the same seed always produces the same
//! structures, which keeps property tests and benchmarks reproducible.
//! Synthetic codes use the letter-digit-digit category shape (`A10`,
//! `B23`) with digit suffixes for deeper levels, and every description is
//! unique and ends in a terminal marker word so that substring matching
//! on descriptions is unambiguous.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AnnotatedNote, Corpus, Split};
use crate::icd_graph::{CodeId, CodeKind, IndexGraph, TabularTree, TreeBuilder};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn description_for(code: &CodeId) -> String {
    format!("Synthetic condition {} marker", code.display_form())
}

/// Build a random tabular tree with roughly `target_nodes` nodes.
///
/// Shape: chapters named by letter span, blocks covering a decade of
/// categories, categories `L10`..`L19`, and random subdivision below the
/// category level down to at most depth 3.
pub fn synth_tree(seed: u64, target_nodes: usize) -> TabularTree {
    let mut rng = rng(seed);
    let mut builder = TreeBuilder::new();
    let mut emitted = 0usize;

    let add = |builder: &mut TreeBuilder,
               emitted: &mut usize,
               id: &str,
               parent: Option<&CodeId>,
               kind: CodeKind| {
        let code = CodeId::new(id).expect("synthetic ids are canonical");
        builder
            .add(
                code.clone(),
                parent.cloned(),
                description_for(&code),
                kind,
                format!("synth {id}"),
            )
            .expect("synthetic ids are unique");
        *emitted += 1;
        code
    };

    'outer: for chapter_idx in 0..26u8 {
        let letter = (b'A' + chapter_idx) as char;
        let chapter_id = add(
            &mut builder,
            &mut emitted,
            &format!("{letter}00{letter}99"),
            None,
            CodeKind::Chapter,
        );
        for block_idx in 0..5u8 {
            let lo = block_idx * 20 + 10;
            let hi = lo + 9;
            let block_id = add(
                &mut builder,
                &mut emitted,
                &format!("{letter}{lo}{letter}{hi}"),
                Some(&chapter_id),
                CodeKind::Block,
            );
            for cat_idx in 0..10u8 {
                let category_id = add(
                    &mut builder,
                    &mut emitted,
                    &format!("{letter}{}", lo + cat_idx),
                    Some(&block_id),
                    CodeKind::Category,
                );
                grow_subtree(&mut rng, &mut builder, &mut emitted, &category_id, 1);
                if emitted >= target_nodes {
                    break 'outer;
                }
            }
        }
    }

    builder.finish().expect("synthetic tree is well-formed")
}

fn grow_subtree(
    rng: &mut ChaCha8Rng,
    builder: &mut TreeBuilder,
    emitted: &mut usize,
    parent: &CodeId,
    depth: u32,
) {
    if depth > 3 {
        return;
    }
    // Leave some categories childless so billable leaves exist at every level.
    let children = match depth {
        1 => rng.gen_range(0..=4),
        _ => {
            if rng.gen_bool(0.3) {
                rng.gen_range(2..=3)
            } else {
                0
            }
        }
    };
    for i in 0..children {
        let id = format!("{}{}", parent.as_str(), i);
        if id.len() > 7 {
            continue;
        }
        let code = CodeId::new(&id).expect("synthetic ids are canonical");
        builder
            .add(
                code.clone(),
                Some(parent.clone()),
                description_for(&code),
                CodeKind::Subcategory,
                format!("synth {id}"),
            )
            .expect("synthetic ids are unique");
        *emitted += 1;
        grow_subtree(rng, builder, emitted, &code, depth + 1);
    }
}

/// Random undirected graph over the given codes: `edges` distinct
/// non-self-loop edges (fewer if the code list is too small).
pub fn synth_graph(seed: u64, codes: &[CodeId], edges: usize) -> IndexGraph {
    let mut rng = rng(seed);
    let mut graph = IndexGraph::new();
    if codes.len() < 2 {
        return graph;
    }
    let mut placed = std::collections::BTreeSet::new();
    let mut attempts = 0;
    while placed.len() < edges && attempts < edges * 20 {
        attempts += 1;
        let a = &codes[rng.gen_range(0..codes.len())];
        let b = &codes[rng.gen_range(0..codes.len())];
        if a == b {
            continue;
        }
        let key = if a < b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        };
        if placed.insert(key) {
            graph.add_edge(a.clone(), b.clone());
        }
    }
    graph
}

/// Billable leaves of a tree, sorted.
pub fn billable_codes(tree: &TabularTree) -> Vec<CodeId> {
    tree.nodes()
        .filter(|n| n.billable)
        .map(|n| n.id.clone())
        .collect()
}

/// A corpus of synthetic notes. Each note gets `golds_per_note` gold codes
/// drawn from distinct chapters, and its text embeds each gold code's
/// description verbatim, which is what the description-matching mock
/// backend keys on.
pub fn synth_corpus(
    seed: u64,
    tree: &TabularTree,
    note_count: usize,
    golds_per_note: usize,
) -> Corpus {
    let mut rng = rng(seed);
    let billable = billable_codes(tree);
    let mut notes = Vec::with_capacity(note_count);
    for i in 0..note_count {
        let golds = pick_cross_chapter(&mut rng, tree, &billable, golds_per_note);
        let mut text = String::from("Outpatient visit.");
        for g in &golds {
            let desc = &tree.node(g).expect("gold codes come from the tree").description;
            text.push_str(&format!(" Patient presents with {desc}."));
        }
        let split = match i % 10 {
            0..=5 => Split::Train,
            6 => Split::Dev,
            _ => Split::Test,
        };
        notes.push(AnnotatedNote {
            id: format!("note-{i:04}"),
            text,
            gold_codes: golds.into_iter().collect(),
            candidate_codes: None,
            candidate_labels: None,
            split,
            no_diagnosis: false,
        });
    }
    Corpus::from_notes(notes).expect("synthetic note ids are unique")
}

/// Sample codes whose chapters are pairwise distinct, so one note's gold
/// codes never appear in each other's expansions.
pub fn pick_cross_chapter(
    rng: &mut ChaCha8Rng,
    tree: &TabularTree,
    pool: &[CodeId],
    count: usize,
) -> Vec<CodeId> {
    let mut chosen: Vec<CodeId> = Vec::new();
    let mut used_chapters: Vec<CodeId> = Vec::new();
    let mut tries = 0;
    while chosen.len() < count && tries < count * 200 {
        tries += 1;
        let candidate = pool[rng.gen_range(0..pool.len())].clone();
        let chapter = chapter_of(tree, &candidate);
        if used_chapters.contains(&chapter) {
            continue;
        }
        used_chapters.push(chapter);
        chosen.push(candidate);
    }
    chosen
}

fn chapter_of(tree: &TabularTree, code: &CodeId) -> CodeId {
    tree.root_path(code)
        .expect("code comes from the tree")
        .first()
        .expect("root path is never empty")
        .clone()
}

/// Random subset of `pool` of the given size, without replacement.
pub fn sample_codes(rng: &mut ChaCha8Rng, pool: &[CodeId], count: usize) -> Vec<CodeId> {
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    indices.shuffle(rng);
    indices
        .into_iter()
        .take(count)
        .map(|i| pool[i].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_tree_is_deterministic() {
        let a = synth_tree(7, 300);
        let b = synth_tree(7, 300);
        assert_eq!(a, b);
        assert!(a.len() >= 300);
    }

    #[test]
    fn synth_tree_has_billable_leaves() {
        let tree = synth_tree(1, 200);
        assert!(tree.billable_count() > 0);
        for node in tree.nodes() {
            if node.billable {
                assert!(node.children.is_empty());
                assert!(node.kind.is_codeable());
            }
        }
    }

    #[test]
    fn synth_graph_has_no_self_loops_and_is_symmetric() {
        let tree = synth_tree(2, 200);
        let codes: Vec<CodeId> = tree.nodes().map(|n| n.id.clone()).collect();
        let graph = synth_graph(3, &codes, 150);
        for a in graph.codes() {
            for b in graph.adjacent(a).unwrap() {
                assert_ne!(a, b);
                assert!(graph.adjacent(b).unwrap().contains(a));
            }
        }
    }

    #[test]
    fn corpus_notes_embed_gold_descriptions() {
        let tree = synth_tree(4, 400);
        let corpus = synth_corpus(5, &tree, 10, 2);
        for note in corpus.notes() {
            for gold in &note.gold_codes {
                let desc = &tree.node(gold).unwrap().description;
                assert!(note.text.contains(desc.as_str()));
            }
        }
    }
}
