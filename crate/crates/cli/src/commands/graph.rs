//! `graph build` and `graph stats`.

use anyhow::Result;
use serde::Serialize;

use icdverify::icd_graph::{save_graph_bundle, CodeKind, GraphBundle};

use crate::args::{GraphBuildArgs, GraphSourceArgs, GraphStatsArgs};
use crate::config::{load_graph, parse_sources};

#[derive(Debug, Serialize)]
struct GraphStats {
    nodes: usize,
    chapters: usize,
    blocks: usize,
    categories: usize,
    subcategories: usize,
    billable: usize,
    roots: usize,
    index_nodes: usize,
    index_edges: usize,
    index_only_codes: usize,
}

fn stats_of(bundle: &GraphBundle) -> GraphStats {
    let count_kind = |kind: CodeKind| bundle.tree.nodes().filter(|n| n.kind == kind).count();
    GraphStats {
        nodes: bundle.tree.len(),
        chapters: count_kind(CodeKind::Chapter),
        blocks: count_kind(CodeKind::Block),
        categories: count_kind(CodeKind::Category),
        subcategories: count_kind(CodeKind::Subcategory),
        billable: bundle.tree.billable_count(),
        roots: bundle.tree.roots().len(),
        index_nodes: bundle.graph.node_count(),
        index_edges: bundle.graph.edge_count(),
        index_only_codes: bundle.graph.codes_absent_from(&bundle.tree).len(),
    }
}

pub fn build(args: GraphBuildArgs) -> Result<i32> {
    let source = GraphSourceArgs {
        graph_cache: None,
        tabular: Some(args.tabular),
        index: args.index,
        format: Some(args.format),
    };
    let bundle = parse_sources(&source)?;
    save_graph_bundle(&bundle, &args.out)?;
    let stats = stats_of(&bundle);
    println!("{}", serde_json::to_string_pretty(&stats)?);
    tracing::info!(cache = %args.out.display(), "graph cache written");
    Ok(0)
}

pub fn stats(args: GraphStatsArgs) -> Result<i32> {
    let bundle = load_graph(&args.graph)?;
    let stats = stats_of(&bundle);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
    } else {
        println!(
            "nodes: {} (chapters {}, blocks {}, categories {}, subcategories {})",
            stats.nodes, stats.chapters, stats.blocks, stats.categories, stats.subcategories
        );
        println!("billable leaves: {}", stats.billable);
        println!("roots: {}", stats.roots);
        println!(
            "index graph: {} nodes, {} edges ({} codes absent from the tree)",
            stats.index_nodes, stats.index_edges, stats.index_only_codes
        );
    }
    Ok(0)
}
