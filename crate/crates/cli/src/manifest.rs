//! The run manifest: enough recorded state to re-execute a run
//! bit-identically against a warm cache. Written atomically next to the
//! run outputs.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use icdverify::gateway::GatewayStats;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub started_utc: String,
    pub finished_utc: String,
    /// The fully resolved config the run actually used.
    pub config: serde_json::Value,
    /// sha256 of every input file.
    pub input_digests: BTreeMap<String, String>,
    pub catalog_version: String,
    pub catalog_digest: String,
    pub backend_calls: u64,
    pub cache_hits: u64,
    pub backend_failures: u64,
    pub cache_hit_ratio: f64,
    /// Warning tallies for error analysis (parse fallbacks and the like).
    pub warning_counts: BTreeMap<String, u64>,
    pub outputs: Vec<String>,
}

pub struct ManifestBuilder {
    started: chrono::DateTime<chrono::Utc>,
    config: serde_json::Value,
    input_digests: BTreeMap<String, String>,
    catalog_version: String,
    catalog_digest: String,
    warning_counts: BTreeMap<String, u64>,
    outputs: Vec<String>,
}

impl ManifestBuilder {
    pub fn new(config: serde_json::Value, catalog_version: &str, catalog_digest: &str) -> Self {
        ManifestBuilder {
            started: chrono::Utc::now(),
            config,
            input_digests: BTreeMap::new(),
            catalog_version: catalog_version.to_string(),
            catalog_digest: catalog_digest.to_string(),
            warning_counts: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        if !path.exists() {
            return Ok(());
        }
        let digest = file_digest(path)?;
        self.input_digests
            .insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn count_warning(&mut self, name: &str, count: u64) {
        *self.warning_counts.entry(name.to_string()).or_insert(0) += count;
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Finalize and write `manifest.json` atomically (temp file + rename).
    pub fn write(self, stats: &GatewayStats, dir: &Path) -> Result<()> {
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_utc: self.started.to_rfc3339(),
            finished_utc: chrono::Utc::now().to_rfc3339(),
            config: self.config,
            input_digests: self.input_digests,
            catalog_version: self.catalog_version,
            catalog_digest: self.catalog_digest,
            backend_calls: stats.backend_calls,
            cache_hits: stats.cache_hits,
            backend_failures: stats.failures,
            cache_hit_ratio: stats.cache_hit_ratio(),
            warning_counts: self.warning_counts,
            outputs: self.outputs,
        };
        let path = dir.join("manifest.json");
        let tmp = dir.join("manifest.json.tmp");
        let json = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&tmp, json.as_bytes())
            .with_context(|| format!("writing {}", tmp.display()))?;
        std::fs::rename(&tmp, &path).with_context(|| format!("renaming to {}", path.display()))?;
        Ok(())
    }
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}
