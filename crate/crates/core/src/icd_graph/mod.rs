//! The two official ICD-10-CM structures: the tabular list as a tree of
//! parent-child edges and the index list as an undirected cross-reference
//! graph, plus the relation queries the expansion step is built on.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod cache;
mod code;
mod tsv;
mod xml;

pub use cache::{load_graph_bundle, save_graph_bundle, GraphBundle, CACHE_VERSION};
pub use code::CodeId;
pub use tsv::{parse_index_tsv, parse_tabular_tsv, write_index_tsv, write_tabular_tsv};
pub use xml::{parse_index_xml, parse_tabular_xml};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid code {raw:?}: expected a letter, two alphanumerics, then 0-4 alphanumerics")]
    InvalidCode { raw: String },
    #[error("unknown code {0}")]
    NotFound(CodeId),
    #[error("empty tabular source")]
    EmptySource,
    #[error("parse error at {locus}: {message}")]
    Parse { locus: String, message: String },
    #[error("duplicate code {code} at {second}; first defined at {first}")]
    DuplicateCode {
        code: CodeId,
        first: String,
        second: String,
    },
    #[error("node {child} references missing parent {parent}")]
    MissingParent { child: CodeId, parent: CodeId },
    #[error("cycle detected through {0}")]
    Cycle(CodeId),
    #[error("node {child} of kind {kind:?} cannot have parent of kind {parent_kind:?}")]
    BadParentKind {
        child: CodeId,
        kind: CodeKind,
        parent_kind: CodeKind,
    },
    #[error("subcategory {0} requires a parent")]
    OrphanSubcategory(CodeId),
    #[error("graph cache: {0}")]
    Cache(String),
    #[error("graph cache version {found} does not match expected {expected}; rebuild the cache")]
    CacheVersion { found: u32, expected: u32 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Level of a node in the tabular tree.
///
/// The three-character `Category` level is depth 0 on the category-relative
/// scale; `Subcategory` levels count edges below it. `Block` and `Chapter`
/// sit above categories (negative depth) and never participate in prefix
/// truncation or relation results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeKind {
    Chapter,
    Block,
    Category,
    Subcategory,
}

impl CodeKind {
    /// Category-level or below: the only kinds returned by relation queries.
    pub fn is_codeable(self) -> bool {
        matches!(self, CodeKind::Category | CodeKind::Subcategory)
    }
}

/// One ICD-10-CM entity in the tabular tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeNode {
    pub id: CodeId,
    pub display: String,
    pub description: String,
    pub billable: bool,
    pub parent: Option<CodeId>,
    pub children: Vec<CodeId>,
    /// Edges below the three-character category node (category = 0).
    /// Blocks are -1 and chapters -2 on the same scale.
    pub depth: i32,
    pub kind: CodeKind,
}

/// The tabular list as a tree of parent-child edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TabularTree {
    nodes: BTreeMap<CodeId, CodeNode>,
    roots: Vec<CodeId>,
}

impl TabularTree {
    pub fn node(&self, code: &CodeId) -> Option<&CodeNode> {
        self.nodes.get(code)
    }

    pub fn require(&self, code: &CodeId) -> Result<&CodeNode, GraphError> {
        self.nodes
            .get(code)
            .ok_or_else(|| GraphError::NotFound(code.clone()))
    }

    pub fn contains(&self, code: &CodeId) -> bool {
        self.nodes.contains_key(code)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn roots(&self) -> &[CodeId] {
        &self.roots
    }

    pub fn nodes(&self) -> impl Iterator<Item = &CodeNode> {
        self.nodes.values()
    }

    pub fn is_billable(&self, code: &CodeId) -> bool {
        self.node(code).map(|n| n.billable).unwrap_or(false)
    }

    pub fn billable_count(&self) -> usize {
        self.nodes.values().filter(|n| n.billable).count()
    }

    /// Codes sharing the same parent, excluding `code` itself. Roots have
    /// no parent and therefore no siblings. Only category-and-below nodes
    /// are returned.
    pub fn siblings(&self, code: &CodeId) -> Result<BTreeSet<CodeId>, GraphError> {
        let node = self.require(code)?;
        let Some(parent) = &node.parent else {
            return Ok(BTreeSet::new());
        };
        let parent_node = self.require(parent)?;
        Ok(parent_node
            .children
            .iter()
            .filter(|c| *c != code)
            .filter(|c| self.nodes[*c].kind.is_codeable())
            .cloned()
            .collect())
    }

    /// Codes sharing the same grandparent, excluding `code` and its
    /// siblings. Empty when `code` has no grandparent. Only
    /// category-and-below nodes are returned.
    pub fn cousins(&self, code: &CodeId) -> Result<BTreeSet<CodeId>, GraphError> {
        let node = self.require(code)?;
        let Some(parent) = node.parent.as_ref() else {
            return Ok(BTreeSet::new());
        };
        let Some(grandparent) = self.require(parent)?.parent.as_ref() else {
            return Ok(BTreeSet::new());
        };
        let siblings = self.siblings(code)?;
        let mut out = BTreeSet::new();
        for uncle in &self.require(grandparent)?.children {
            for g in &self.nodes[uncle].children {
                if g != code && !siblings.contains(g) && self.nodes[g].kind.is_codeable() {
                    out.insert(g.clone());
                }
            }
        }
        Ok(out)
    }

    /// Path from a root down to `code`, inclusive.
    pub fn root_path(&self, code: &CodeId) -> Result<Vec<CodeId>, GraphError> {
        let mut path = vec![code.clone()];
        let mut current = self.require(code)?;
        while let Some(parent) = &current.parent {
            current = self.require(parent)?;
            path.push(current.id.clone());
        }
        path.reverse();
        Ok(path)
    }

    /// Deepest node on both root paths, with its depth on the
    /// category-relative scale. `None` when the two codes share no
    /// ancestor (different chapters).
    pub fn deepest_common_ancestor(
        &self,
        a: &CodeId,
        b: &CodeId,
    ) -> Result<Option<(CodeId, i32)>, GraphError> {
        let path_a = self.root_path(a)?;
        let path_b = self.root_path(b)?;
        let mut deepest = None;
        for (x, y) in path_a.iter().zip(path_b.iter()) {
            if x != y {
                break;
            }
            deepest = Some(x.clone());
        }
        Ok(deepest.map(|id| {
            let depth = self.nodes[&id].depth;
            (id, depth)
        }))
    }
}

/// Incrementally assembles a [`TabularTree`], validating invariants on
/// `finish`.
pub struct TreeBuilder {
    rows: Vec<RawNode>,
    seen: BTreeMap<CodeId, String>,
}

struct RawNode {
    id: CodeId,
    parent: Option<CodeId>,
    description: String,
    kind: CodeKind,
}

impl TreeBuilder {
    pub fn new() -> Self {
        TreeBuilder {
            rows: Vec::new(),
            seen: BTreeMap::new(),
        }
    }

    pub fn add(
        &mut self,
        id: CodeId,
        parent: Option<CodeId>,
        description: String,
        kind: CodeKind,
        locus: String,
    ) -> Result<(), GraphError> {
        if let Some(first) = self.seen.get(&id) {
            return Err(GraphError::DuplicateCode {
                code: id,
                first: first.clone(),
                second: locus,
            });
        }
        self.seen.insert(id.clone(), locus);
        self.rows.push(RawNode {
            id,
            parent,
            description,
            kind,
        });
        Ok(())
    }

    pub fn finish(self) -> Result<TabularTree, GraphError> {
        if self.rows.is_empty() {
            return Err(GraphError::EmptySource);
        }

        let mut nodes: BTreeMap<CodeId, CodeNode> = BTreeMap::new();
        let mut roots = Vec::new();
        for row in &self.rows {
            nodes.insert(
                row.id.clone(),
                CodeNode {
                    id: row.id.clone(),
                    display: row.id.display_form(),
                    description: row.description.clone(),
                    billable: false,
                    parent: row.parent.clone(),
                    children: Vec::new(),
                    depth: 0,
                    kind: row.kind,
                },
            );
        }

        // Child links in insertion order; parents must exist.
        for row in &self.rows {
            match &row.parent {
                Some(parent) => {
                    if !nodes.contains_key(parent) {
                        return Err(GraphError::MissingParent {
                            child: row.id.clone(),
                            parent: parent.clone(),
                        });
                    }
                    nodes
                        .get_mut(parent)
                        .expect("parent presence checked above")
                        .children
                        .push(row.id.clone());
                }
                None => roots.push(row.id.clone()),
            }
        }

        for row in &self.rows {
            if let Some(parent) = &row.parent {
                let parent_kind = nodes[parent].kind;
                let ok = match row.kind {
                    CodeKind::Chapter => false,
                    CodeKind::Block => parent_kind == CodeKind::Chapter,
                    CodeKind::Category => {
                        matches!(parent_kind, CodeKind::Chapter | CodeKind::Block)
                    }
                    CodeKind::Subcategory => parent_kind.is_codeable(),
                };
                if !ok {
                    return Err(GraphError::BadParentKind {
                        child: row.id.clone(),
                        kind: row.kind,
                        parent_kind,
                    });
                }
            } else if row.kind == CodeKind::Subcategory {
                return Err(GraphError::OrphanSubcategory(row.id.clone()));
            }
        }

        // Depth on the category-relative scale; walking the parent chain
        // also catches cycles (a cycle has no parentless terminus).
        let ids: Vec<CodeId> = nodes.keys().cloned().collect();
        for id in &ids {
            let mut depth_from_category = 0i32;
            let mut current = id.clone();
            let mut hops = 0usize;
            let depth = loop {
                let node = &nodes[&current];
                match node.kind {
                    CodeKind::Category => break depth_from_category,
                    CodeKind::Block => break -1,
                    CodeKind::Chapter => break -2,
                    CodeKind::Subcategory => {
                        let parent = node
                            .parent
                            .clone()
                            .ok_or_else(|| GraphError::OrphanSubcategory(current.clone()))?;
                        depth_from_category += 1;
                        current = parent;
                    }
                }
                hops += 1;
                if hops > nodes.len() {
                    return Err(GraphError::Cycle(id.clone()));
                }
            };
            nodes.get_mut(id).expect("iterating existing keys").depth = depth;
        }

        for id in &ids {
            let node = &nodes[id];
            let billable = node.children.is_empty() && node.kind.is_codeable();
            nodes.get_mut(id).expect("iterating existing keys").billable = billable;
        }

        Ok(TabularTree { nodes, roots })
    }
}

impl Default for TreeBuilder {
    fn default() -> Self {
        Self::new()
    }
}

/// How many hops a neighbor query walks in the index graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hops {
    One,
    Two,
}

/// The index list as an undirected cross-reference graph.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexGraph {
    adjacency: BTreeMap<CodeId, BTreeSet<CodeId>>,
}

impl IndexGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert an undirected edge. Self-loops are rejected by the parsers
    /// before they get here; this is a hard invariant.
    pub fn add_edge(&mut self, a: CodeId, b: CodeId) {
        assert_ne!(a, b, "index graph edges must not be self-loops");
        self.adjacency.entry(a.clone()).or_default().insert(b.clone());
        self.adjacency.entry(b).or_default().insert(a);
    }

    pub fn adjacent(&self, code: &CodeId) -> Option<&BTreeSet<CodeId>> {
        self.adjacency.get(code)
    }

    pub fn codes(&self) -> impl Iterator<Item = &CodeId> {
        self.adjacency.keys()
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(|s| s.len()).sum::<usize>() / 2
    }

    /// 1-hop neighbors are the adjacency set; 2-hop neighbors are the
    /// union of the neighbors' adjacency sets minus the code itself
    /// (overlap with the 1-hop set is allowed here and removed by the
    /// expansion union downstream). Absent codes have no neighbors.
    pub fn neighbors(&self, code: &CodeId, hops: Hops) -> BTreeSet<CodeId> {
        let Some(adj) = self.adjacency.get(code) else {
            return BTreeSet::new();
        };
        match hops {
            Hops::One => adj.clone(),
            Hops::Two => {
                let mut out = BTreeSet::new();
                for v in adj {
                    if let Some(second) = self.adjacency.get(v) {
                        out.extend(second.iter().cloned());
                    }
                }
                out.remove(code);
                out
            }
        }
    }

    /// Codes referenced by the index list but absent from the tabular
    /// tree. They stay in the graph; expansion filters them when a
    /// billable-only candidate set is requested.
    pub fn codes_absent_from(&self, tree: &TabularTree) -> BTreeSet<CodeId> {
        self.adjacency
            .keys()
            .filter(|c| !tree.contains(c))
            .cloned()
            .collect()
    }
}
