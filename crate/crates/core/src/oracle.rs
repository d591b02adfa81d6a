//! Reference definition scans.
//!
//! Brute-force implementations of the relation and expansion definitions,
//! written against raw parent pointers and raw edge lists only. They
//! share no code with the production implementations in [`crate::icd_graph`]
//! and [`crate::expansion`]; the test suites check the fast paths against
//! these scans.

use std::collections::BTreeSet;

use crate::expansion::ExpansionConfig;
use crate::icd_graph::{CodeId, TabularTree};

fn parent_of<'a>(tree: &'a TabularTree, code: &CodeId) -> Option<&'a CodeId> {
    tree.node(code).and_then(|n| n.parent.as_ref())
}

/// {s : P(s) = P(c), s != c}, category-and-below only; empty when c has
/// no parent.
pub fn siblings_scan(tree: &TabularTree, c: &CodeId) -> BTreeSet<CodeId> {
    let Some(parent) = parent_of(tree, c) else {
        return BTreeSet::new();
    };
    tree.nodes()
        .filter(|s| s.id != *c)
        .filter(|s| s.parent.as_ref() == Some(parent))
        .filter(|s| s.kind.is_codeable())
        .map(|s| s.id.clone())
        .collect()
}

/// {g : P(P(g)) = P(P(c))} minus S(c) minus {c}, category-and-below only;
/// empty when c has no grandparent.
pub fn cousins_scan(tree: &TabularTree, c: &CodeId) -> BTreeSet<CodeId> {
    let Some(grandparent) = parent_of(tree, c).and_then(|p| parent_of(tree, p)) else {
        return BTreeSet::new();
    };
    let siblings = siblings_scan(tree, c);
    tree.nodes()
        .filter(|g| g.id != *c)
        .filter(|g| {
            g.parent
                .as_ref()
                .and_then(|p| parent_of(tree, p))
                .map(|gp| gp == grandparent)
                .unwrap_or(false)
        })
        .filter(|g| !siblings.contains(&g.id))
        .filter(|g| g.kind.is_codeable())
        .map(|g| g.id.clone())
        .collect()
}

/// {n : (c, n) in E} over a raw undirected edge list.
pub fn n1_scan(edges: &[(CodeId, CodeId)], c: &CodeId) -> BTreeSet<CodeId> {
    let mut out = BTreeSet::new();
    for (a, b) in edges {
        if a == c {
            out.insert(b.clone());
        }
        if b == c {
            out.insert(a.clone());
        }
    }
    out
}

/// {n : exists v, (c, v) in E and (v, n) in E} minus {c}: endpoints of
/// two-edge walks, which may include 1-hop neighbors through triangles.
pub fn n2_scan(edges: &[(CodeId, CodeId)], c: &CodeId) -> BTreeSet<CodeId> {
    let mut out = BTreeSet::new();
    for v in n1_scan(edges, c) {
        out.extend(n1_scan(edges, &v));
    }
    out.remove(c);
    out
}

/// Nodes within BFS distance `max_depth` of `c`, excluding `c`.
pub fn bfs_within(edges: &[(CodeId, CodeId)], c: &CodeId, max_depth: usize) -> BTreeSet<CodeId> {
    let mut frontier = BTreeSet::from([c.clone()]);
    let mut seen = BTreeSet::from([c.clone()]);
    for _ in 0..max_depth {
        let mut next = BTreeSet::new();
        for node in &frontier {
            for neighbor in n1_scan(edges, node) {
                if seen.insert(neighbor.clone()) {
                    next.insert(neighbor);
                }
            }
        }
        frontier = next;
    }
    seen.remove(c);
    seen
}

/// The expansion union computed entirely from definition scans:
/// dedup first, billable filter second, seed appended last.
pub fn expand_scan(
    tree: &TabularTree,
    edges: &[(CodeId, CodeId)],
    seed: &CodeId,
    cfg: &ExpansionConfig,
) -> BTreeSet<CodeId> {
    let mut union = BTreeSet::new();
    if cfg.use_siblings {
        union.extend(siblings_scan(tree, seed));
    }
    if cfg.use_cousins {
        union.extend(cousins_scan(tree, seed));
    }
    if cfg.use_n1 {
        union.extend(n1_scan(edges, seed));
    }
    if cfg.use_n2 {
        union.extend(n2_scan(edges, seed));
    }
    if cfg.billable_only {
        union.retain(|code| tree.node(code).map(|n| n.billable).unwrap_or(false));
    }
    if cfg.include_seed {
        union.insert(seed.clone());
    }
    union
}
