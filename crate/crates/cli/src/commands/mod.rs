//! Subcommand implementations. Each returns the process exit code.

pub mod corpus;
pub mod eval;
pub mod expand;
pub mod generate;
pub mod graph;
pub mod pipeline;
pub mod prompt;
pub mod verify;

use std::path::Path;

use anyhow::{Context, Result};

use icdverify::corpus::{load_corpus_file, Corpus, Split};
use icdverify::gateway::Gateway;
use icdverify::icd_graph::GraphBundle;
use icdverify::prompting::{OptionOrdering, PromptCatalog};

use crate::args::RunCommonArgs;
use crate::config::{load_graph, resolve_graph_source, RunConfig};
use crate::manifest::ManifestBuilder;

/// Everything a backend-calling run needs, with CLI overrides applied.
pub struct RunSetup {
    pub config: RunConfig,
    pub bundle: GraphBundle,
    pub corpus: Corpus,
    pub catalog: PromptCatalog,
    pub gateway: Gateway,
    pub manifest: ManifestBuilder,
}

pub fn prepare_run(common: &RunCommonArgs) -> Result<RunSetup> {
    let mut config = RunConfig::load(&common.config)?;

    if let Some(parallelism) = common.parallelism {
        config.pipeline.parallelism = parallelism.max(1);
    }
    let seed = common.seed.or(config.seed);
    if let Some(seed) = seed {
        config.pipeline.revision.ordering = OptionOrdering::SeededShuffle(seed);
    }
    if let Some(catalog_dir) = &common.catalog {
        config.catalog = Some(catalog_dir.clone());
    }

    let graph_args = resolve_graph_source(&common.graph, Some(&config.graph))?;
    let bundle = load_graph(&graph_args)?;

    let (corpus, corpus_warnings) = load_corpus_file(&common.corpus, Some(&bundle.tree))
        .with_context(|| format!("loading corpus {}", common.corpus.display()))?;
    for warning in &corpus_warnings {
        tracing::warn!(target: "corpus", "{warning}");
    }
    let corpus = match &common.split {
        Some(split) => {
            let split: Split = serde_json::from_value(serde_json::Value::String(split.clone()))
                .map_err(|_| anyhow::anyhow!("--split must be train, dev, or test"))?;
            corpus.filter_split(split)
        }
        None => corpus,
    };

    let catalog = match &config.catalog {
        Some(dir) => PromptCatalog::from_dir(dir)
            .with_context(|| format!("loading catalog {}", dir.display()))?,
        None => PromptCatalog::builtin(),
    };

    let gateway = config.build_gateway(common.cache.as_deref())?;

    let mut manifest = ManifestBuilder::new(
        serde_json::to_value(&config).expect("config serializes cleanly"),
        icdverify::prompting::CATALOG_VERSION,
        &catalog.digest(),
    );
    manifest.add_input(&common.config)?;
    manifest.add_input(&common.corpus)?;
    for path in [
        graph_args.graph_cache.as_deref(),
        graph_args.tabular.as_deref(),
        graph_args.index.as_deref(),
    ]
    .into_iter()
    .flatten()
    {
        manifest.add_input(path)?;
    }
    manifest.count_warning("corpus_validation", corpus_warnings.len() as u64);

    Ok(RunSetup {
        config,
        bundle,
        corpus,
        catalog,
        gateway,
        manifest,
    })
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
