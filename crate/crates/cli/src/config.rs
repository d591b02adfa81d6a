//! The run config file: the pipeline configuration plus backend
//! definitions and paths, as one committed JSON document. CLI flags
//! override individual fields.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use icdverify::gateway::{
    FixedBackend, Gateway, HttpBackend, NoteMatchBackend, ResponseCache, RetryPolicy,
    ScriptedBackend,
};
use icdverify::icd_graph::{
    load_graph_bundle, parse_index_tsv, parse_index_xml, parse_tabular_tsv, parse_tabular_xml,
    save_graph_bundle, GraphBundle, GraphError, IndexGraph,
};
use icdverify::pipeline::PipelineConfig;

use crate::args::{GraphSourceArgs, SourceFormat};

pub const ENV_ENDPOINT: &str = "MODEL_ENDPOINT_URL";
pub const ENV_TOKEN: &str = "MODEL_API_TOKEN";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptEntry {
    Text(String),
    Fail { error: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BackendSpec {
    /// FIFO queue of canned responses; entries are plain strings or
    /// {"error": "transient"|"rejected"}.
    Scripted { script: Vec<ScriptEntry> },
    /// Always the same response.
    Fixed { text: String },
    /// Multiple-choice mock keyed on option descriptions found in the note.
    MatchNote,
    /// Generic HTTP completion endpoint. URL defaults to
    /// $MODEL_ENDPOINT_URL; the bearer token always comes from
    /// $MODEL_API_TOKEN.
    Http {
        #[serde(default)]
        url: Option<String>,
        #[serde(default)]
        timeout_s: Option<u64>,
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GraphSourceConfig {
    #[serde(default)]
    pub cache: Option<PathBuf>,
    #[serde(default)]
    pub tabular: Option<PathBuf>,
    #[serde(default)]
    pub index: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    pub backends: BTreeMap<String, BackendSpec>,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub cache: Option<PathBuf>,
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    #[serde(default)]
    pub graph: GraphSourceConfig,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(config)
    }

    /// Build the gateway from the backend specs, retry policy, and cache.
    pub fn build_gateway(&self, cache_override: Option<&Path>) -> Result<Gateway> {
        let mut gateway = Gateway::new(self.retry);
        for (id, spec) in &self.backends {
            let backend: Arc<dyn icdverify::gateway::Backend> = match spec {
                BackendSpec::Scripted { script } => {
                    let b = ScriptedBackend::new();
                    for entry in script {
                        match entry {
                            ScriptEntry::Text(text) => b.push_text(text.clone()),
                            ScriptEntry::Fail { error } if error == "transient" => {
                                b.fail_transiently(1)
                            }
                            ScriptEntry::Fail { error } => b.fail_rejected(error.clone()),
                        }
                    }
                    Arc::new(b)
                }
                BackendSpec::Fixed { text } => Arc::new(FixedBackend::new(text.clone())),
                BackendSpec::MatchNote => Arc::new(NoteMatchBackend::new()),
                BackendSpec::Http { url, timeout_s } => {
                    let url = match url {
                        Some(u) => u.clone(),
                        None => std::env::var(ENV_ENDPOINT).with_context(|| {
                            format!("backend {id}: no url in config and {ENV_ENDPOINT} unset")
                        })?,
                    };
                    let token = std::env::var(ENV_TOKEN).ok();
                    let timeout = Duration::from_secs(timeout_s.unwrap_or(60));
                    Arc::new(
                        HttpBackend::new(url, token, timeout)
                            .map_err(|e| anyhow::anyhow!("backend {id}: {e}"))?,
                    )
                }
            };
            gateway.register(id.clone(), backend);
        }
        let cache_path = cache_override.map(Path::to_path_buf).or(self.cache.clone());
        if let Some(path) = cache_path {
            let cache = ResponseCache::open(&path)
                .with_context(|| format!("opening cache {}", path.display()))?;
            gateway = gateway.with_cache(cache);
        }
        Ok(gateway)
    }
}

/// Resolve the graph sources: CLI flags win over the config block.
pub fn resolve_graph_source(
    args: &GraphSourceArgs,
    config: Option<&GraphSourceConfig>,
) -> Result<GraphSourceArgs> {
    let mut merged = args.clone();
    if let Some(config) = config {
        if merged.graph_cache.is_none() {
            merged.graph_cache = config.cache.clone();
        }
        if merged.tabular.is_none() {
            merged.tabular = config.tabular.clone();
        }
        if merged.index.is_none() {
            merged.index = config.index.clone();
        }
        if merged.format.is_none() {
            merged.format = match config.format.as_deref() {
                Some("xml") => Some(SourceFormat::Xml),
                Some("tsv") => Some(SourceFormat::Tsv),
                Some(other) => bail!("config graph.format {other:?} is not xml or tsv"),
                None => None,
            };
        }
    }
    Ok(merged)
}

/// Load the tree and graph from a cache or source files. A stale cache is
/// rebuilt from the sources when they are available.
pub fn load_graph(args: &GraphSourceArgs) -> Result<GraphBundle> {
    if let Some(cache_path) = &args.graph_cache {
        match load_graph_bundle(cache_path) {
            Ok(bundle) => return Ok(bundle),
            Err(GraphError::CacheVersion { found, expected }) => {
                if args.tabular.is_some() {
                    tracing::warn!(found, expected, "stale graph cache; rebuilding from sources");
                    let bundle = parse_sources(args)?;
                    save_graph_bundle(&bundle, cache_path)?;
                    return Ok(bundle);
                }
                bail!(
                    "graph cache {} has version {found} (expected {expected}); \
                     rebuild it with `icdverify graph build`",
                    cache_path.display()
                );
            }
            Err(e) if args.tabular.is_none() => {
                return Err(e).with_context(|| format!("loading {}", cache_path.display()));
            }
            Err(e) => {
                tracing::warn!(error = %e, "unreadable graph cache; rebuilding from sources");
                let bundle = parse_sources(args)?;
                save_graph_bundle(&bundle, cache_path)?;
                return Ok(bundle);
            }
        }
    }
    parse_sources(args)
}

pub fn parse_sources(args: &GraphSourceArgs) -> Result<GraphBundle> {
    let Some(tabular_path) = &args.tabular else {
        bail!("no graph source: pass --graph-cache or --tabular/--format");
    };
    let format = args
        .format
        .ok_or_else(|| anyhow::anyhow!("--format is required with --tabular"))?;
    let tabular_file = std::fs::File::open(tabular_path)
        .with_context(|| format!("opening {}", tabular_path.display()))?;
    let reader = std::io::BufReader::new(tabular_file);
    let tree = match format {
        SourceFormat::Xml => parse_tabular_xml(reader)?,
        SourceFormat::Tsv => parse_tabular_tsv(reader)?,
    };
    let graph = match &args.index {
        Some(index_path) => {
            let file = std::fs::File::open(index_path)
                .with_context(|| format!("opening {}", index_path.display()))?;
            let reader = std::io::BufReader::new(file);
            let parsed = match format {
                SourceFormat::Xml => parse_index_xml(reader)?,
                SourceFormat::Tsv => parse_index_tsv(reader)?,
            };
            for warning in &parsed.warnings {
                tracing::warn!(target: "index_parse", "{warning}");
            }
            parsed.graph
        }
        None => IndexGraph::new(),
    };
    Ok(GraphBundle { tree, graph })
}
