//! Compact on-disk cache for a parsed tree + index graph pair.
//!
//! Layout: 4-byte magic, little-endian u32 version, bincode payload.
//! A version mismatch is reported as [`GraphError::CacheVersion`]; stale
//! caches are rebuilt from the sources, never migrated.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GraphError, IndexGraph, TabularTree};

const MAGIC: &[u8; 4] = b"ICDG";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphBundle {
    pub tree: TabularTree,
    pub graph: IndexGraph,
}

pub fn save_graph_bundle(bundle: &GraphBundle, path: &Path) -> Result<(), GraphError> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&CACHE_VERSION.to_le_bytes())?;
    bincode::serialize_into(&mut out, bundle).map_err(|e| GraphError::Cache(e.to_string()))?;
    out.flush()?;
    Ok(())
}

pub fn load_graph_bundle(path: &Path) -> Result<GraphBundle, GraphError> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(GraphError::Cache("not a graph cache file".into()));
    }
    let mut version = [0u8; 4];
    input.read_exact(&mut version)?;
    let found = u32::from_le_bytes(version);
    if found != CACHE_VERSION {
        return Err(GraphError::CacheVersion {
            found,
            expected: CACHE_VERSION,
        });
    }
    bincode::deserialize_from(&mut input).map_err(|e| GraphError::Cache(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::icd_graph::parse_tabular_tsv;

    #[test]
    fn cache_round_trip() {
        let tree = parse_tabular_tsv(
            "I11\t\tHypertensive heart disease\tcategory\n\
             I110\tI11\twith heart failure\tsubcategory\n"
                .as_bytes(),
        )
        .unwrap();
        let bundle = GraphBundle {
            tree,
            graph: IndexGraph::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("graph.bin");
        save_graph_bundle(&bundle, &path).unwrap();
        let loaded = load_graph_bundle(&path).unwrap();
        assert_eq!(loaded.tree, bundle.tree);
        assert_eq!(loaded.graph, bundle.graph);
    }

    #[test]
    fn stale_version_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("graph.bin");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&999u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_graph_bundle(&path),
            Err(GraphError::CacheVersion { found: 999, .. })
        ));
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("graph.bin");
        std::fs::write(&path, b"NOPE0000junk").unwrap();
        assert!(matches!(
            load_graph_bundle(&path),
            Err(GraphError::Cache(_))
        ));
    }
}
