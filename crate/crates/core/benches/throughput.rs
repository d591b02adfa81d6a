//! Batch throughput: sequential implementations vs the rayon-parallel
//! entry points (identical code path when built without the `parallel`
//! feature, in which case only the sequential groups run).

use std::collections::BTreeSet;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use icdverify::expansion::{expand_many, expand_many_seq, ExpansionConfig};
use icdverify::icd_graph::{CodeId, IndexGraph, TabularTree};
use icdverify::metrics::{evaluate_notes, evaluate_notes_seq, NoteInput};
use icdverify::synth::{billable_codes, rng, sample_codes, synth_graph, synth_tree};

struct Fixture {
    tree: TabularTree,
    graph: IndexGraph,
    seeds: Vec<CodeId>,
    notes: Vec<NoteInput>,
}

fn fixture() -> Fixture {
    let tree = synth_tree(11, 4000);
    let all_codes: Vec<CodeId> = tree.nodes().map(|n| n.id.clone()).collect();
    let graph = synth_graph(12, &all_codes, 6000);
    let billable = billable_codes(&tree);
    let mut r = rng(13);
    let seeds = sample_codes(&mut r, &billable, 400);

    let mut notes = Vec::new();
    for i in 0..300 {
        let pred: BTreeSet<CodeId> = sample_codes(&mut r, &billable, 8).into_iter().collect();
        let gold: BTreeSet<CodeId> = sample_codes(&mut r, &billable, 8).into_iter().collect();
        notes.push((format!("note-{i}"), pred, gold));
    }
    Fixture {
        tree,
        graph,
        seeds,
        notes,
    }
}

fn bench_expansion(c: &mut Criterion) {
    let fx = fixture();
    let cfg = ExpansionConfig::default();
    let mut group = c.benchmark_group("expand_batch");
    group.bench_with_input(
        BenchmarkId::new("sequential", fx.seeds.len()),
        &fx,
        |b, fx| {
            b.iter(|| expand_many_seq(&fx.tree, &fx.graph, &fx.seeds, &cfg));
        },
    );
    #[cfg(feature = "parallel")]
    group.bench_with_input(
        BenchmarkId::new("parallel", fx.seeds.len()),
        &fx,
        |b, fx| {
            b.iter(|| expand_many(&fx.tree, &fx.graph, &fx.seeds, &cfg));
        },
    );
    #[cfg(not(feature = "parallel"))]
    {
        let _ = expand_many;
    }
    group.finish();
}

fn bench_note_scoring(c: &mut Criterion) {
    let fx = fixture();
    let mut group = c.benchmark_group("evaluate_notes");
    group.bench_with_input(
        BenchmarkId::new("sequential", fx.notes.len()),
        &fx,
        |b, fx| {
            b.iter(|| evaluate_notes_seq(&fx.tree, &fx.notes));
        },
    );
    #[cfg(feature = "parallel")]
    group.bench_with_input(
        BenchmarkId::new("parallel", fx.notes.len()),
        &fx,
        |b, fx| {
            b.iter(|| evaluate_notes(&fx.tree, &fx.notes));
        },
    );
    #[cfg(not(feature = "parallel"))]
    {
        let _ = evaluate_notes;
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = bench_expansion, bench_note_scoring
}
criterion_main!(benches);
