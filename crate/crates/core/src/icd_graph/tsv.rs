//! Line-oriented fixture formats.
//!
//! Tabular rows are `child<TAB>parent<TAB>description<TAB>kind` (empty
//! parent marks a root); index rows are `a<TAB>b`. UTF-8, LF line endings.
//! These exist so the test suite never depends on the official 100+ MB
//! XML releases.

use std::io::{BufRead, BufReader, Read, Write};

use super::{CodeId, CodeKind, GraphError, IndexGraph, TabularTree, TreeBuilder};

fn kind_from_str(s: &str, line: usize) -> Result<CodeKind, GraphError> {
    match s {
        "chapter" => Ok(CodeKind::Chapter),
        "block" => Ok(CodeKind::Block),
        "category" => Ok(CodeKind::Category),
        "subcategory" => Ok(CodeKind::Subcategory),
        other => Err(GraphError::Parse {
            locus: format!("line {line}"),
            message: format!("unknown kind {other:?}"),
        }),
    }
}

fn kind_to_str(kind: CodeKind) -> &'static str {
    match kind {
        CodeKind::Chapter => "chapter",
        CodeKind::Block => "block",
        CodeKind::Category => "category",
        CodeKind::Subcategory => "subcategory",
    }
}

pub fn parse_tabular_tsv<R: Read>(source: R) -> Result<TabularTree, GraphError> {
    let reader = BufReader::new(source);
    let mut builder = TreeBuilder::new();
    let mut saw_row = false;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        saw_row = true;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(GraphError::Parse {
                locus: format!("line {lineno}"),
                message: format!("expected 4 tab-separated fields, got {}", fields.len()),
            });
        }
        let id = CodeId::new(fields[0]).map_err(|e| GraphError::Parse {
            locus: format!("line {lineno}"),
            message: e.to_string(),
        })?;
        let parent = if fields[1].trim().is_empty() {
            None
        } else {
            Some(CodeId::new(fields[1]).map_err(|e| GraphError::Parse {
                locus: format!("line {lineno}"),
                message: e.to_string(),
            })?)
        };
        let kind = kind_from_str(fields[3].trim(), lineno)?;
        builder.add(
            id,
            parent,
            fields[2].to_string(),
            kind,
            format!("line {lineno}"),
        )?;
    }
    if !saw_row {
        return Err(GraphError::EmptySource);
    }
    builder.finish()
}

/// Pre-order serialization; `parse_tabular_tsv` on the output reproduces
/// the tree exactly (same roots, same child order).
pub fn write_tabular_tsv<W: Write>(tree: &TabularTree, mut out: W) -> Result<(), GraphError> {
    fn emit<W: Write>(tree: &TabularTree, id: &CodeId, out: &mut W) -> Result<(), GraphError> {
        let node = tree.node(id).expect("walking tree-owned ids");
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            node.id,
            node.parent.as_ref().map(|p| p.as_str()).unwrap_or(""),
            node.description,
            kind_to_str(node.kind)
        )?;
        for child in &node.children {
            emit(tree, child, out)?;
        }
        Ok(())
    }
    for root in tree.roots() {
        emit(tree, root, &mut out)?;
    }
    Ok(())
}

/// An index graph plus the warnings collected while building it.
#[derive(Debug)]
pub struct IndexParse {
    pub graph: IndexGraph,
    pub warnings: Vec<String>,
}

pub fn parse_index_tsv<R: Read>(source: R) -> Result<IndexParse, GraphError> {
    let reader = BufReader::new(source);
    let mut graph = IndexGraph::new();
    let mut warnings = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(GraphError::Parse {
                locus: format!("line {lineno}"),
                message: format!("expected 2 tab-separated fields, got {}", fields.len()),
            });
        }
        let a = match CodeId::new(fields[0]) {
            Ok(c) => c,
            Err(e) => {
                warnings.push(format!("line {lineno}: edge dropped: {e}"));
                continue;
            }
        };
        let b = match CodeId::new(fields[1]) {
            Ok(c) => c,
            Err(e) => {
                warnings.push(format!("line {lineno}: edge dropped: {e}"));
                continue;
            }
        };
        if a == b {
            warnings.push(format!("line {lineno}: self-loop on {a} dropped"));
            continue;
        }
        graph.add_edge(a, b);
    }
    Ok(IndexParse { graph, warnings })
}

/// One `a<TAB>b` row per undirected edge, each edge once with a < b.
pub fn write_index_tsv<W: Write>(graph: &IndexGraph, mut out: W) -> Result<(), GraphError> {
    for a in graph.codes() {
        for b in graph.adjacent(a).into_iter().flatten() {
            if a < b {
                writeln!(out, "{a}\t{b}")?;
            }
        }
    }
    Ok(())
}
