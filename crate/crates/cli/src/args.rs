//! Command-line argument definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "icdverify",
    version,
    about = "ICD-10-CM coding toolkit: hierarchy graphs, candidate expansion, model-based revision, and hierarchy-aware evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Build or inspect the tabular tree / index graph cache.
    Graph {
        #[command(subcommand)]
        command: GraphCommand,
    },
    /// Expand one code into its candidate set.
    Expand(ExpandArgs),
    /// Render prompts without calling any backend.
    Prompt {
        #[command(subcommand)]
        command: PromptCommand,
    },
    /// Run the generation stage only, writing predictions as JSON-Lines.
    Generate(GenerateArgs),
    /// Full pipeline runs.
    Pipeline {
        #[command(subcommand)]
        command: PipelineCommand,
    },
    /// Standalone verification (gold-expansion grid or labeled candidates).
    Verify(VerifyArgs),
    /// Score predictions against a gold corpus.
    Eval(EvalArgs),
    /// Corpus file utilities.
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
}

#[derive(Subcommand)]
pub enum GraphCommand {
    /// Parse source files and write a binary graph cache.
    Build(GraphBuildArgs),
    /// Print node/edge statistics for a graph.
    Stats(GraphStatsArgs),
}

#[derive(Subcommand)]
pub enum PromptCommand {
    /// Render a prompt to stdout.
    Preview(PromptPreviewArgs),
}

#[derive(Subcommand)]
pub enum PipelineCommand {
    /// Run the configured pipeline over a corpus.
    Run(PipelineRunArgs),
}

#[derive(Subcommand)]
pub enum CorpusCommand {
    /// Validate a corpus file, optionally against the tabular tree.
    Validate(CorpusValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceFormat {
    /// Official CDC/NCHS XML releases.
    Xml,
    /// Line-oriented fixture TSV.
    Tsv,
}

/// Where the tree and index graph come from. Either a prebuilt cache or
/// source files; when both are given and the cache is stale it is rebuilt
/// from the sources.
#[derive(Args, Debug, Clone, Default)]
pub struct GraphSourceArgs {
    /// Binary graph cache produced by `graph build`.
    #[arg(long)]
    pub graph_cache: Option<PathBuf>,
    /// Tabular list source file.
    #[arg(long)]
    pub tabular: Option<PathBuf>,
    /// Index list source file.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Format of --tabular / --index.
    #[arg(long = "source-format", id = "source_format", value_enum)]
    pub format: Option<SourceFormat>,
}

#[derive(Args, Debug)]
pub struct GraphBuildArgs {
    /// Tabular list source file.
    #[arg(long)]
    pub tabular: PathBuf,
    /// Index list source file (optional; omitting it leaves the graph empty).
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Source format.
    #[arg(long, value_enum, default_value = "xml")]
    pub format: SourceFormat,
    /// Output cache path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GraphStatsArgs {
    #[command(flatten)]
    pub graph: GraphSourceArgs,
    /// Emit JSON instead of the human-readable summary.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct ExpandArgs {
    #[command(flatten)]
    pub graph: GraphSourceArgs,
    /// Seed code (dotted or canonical form).
    #[arg(long)]
    pub code: String,
    /// Include sibling codes.
    #[arg(long)]
    pub siblings: bool,
    /// Include cousin codes.
    #[arg(long)]
    pub cousins: bool,
    /// Include 1-hop index-graph neighbors.
    #[arg(long)]
    pub n1: bool,
    /// Include 2-hop index-graph neighbors.
    #[arg(long)]
    pub n2: bool,
    /// Enable every relation.
    #[arg(long)]
    pub all: bool,
    /// Drop the seed itself from the candidate set.
    #[arg(long)]
    pub no_seed: bool,
    /// Keep non-billable candidates too.
    #[arg(long)]
    pub non_billable: bool,
    /// Truncate the candidate set to this many entries.
    #[arg(long)]
    pub max: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PromptKind {
    Generation,
    Revision,
    Binary,
}

#[derive(Args, Debug)]
pub struct PromptPreviewArgs {
    #[command(flatten)]
    pub graph: GraphSourceArgs,
    /// Which prompt family to render.
    #[arg(long, value_enum)]
    pub kind: PromptKind,
    /// Note text file (UTF-8).
    #[arg(long)]
    pub note_file: PathBuf,
    /// Generation style.
    #[arg(long, default_value = "single_line")]
    pub style: String,
    /// Generation target format.
    #[arg(long, default_value = "code_only")]
    pub target: String,
    /// Revision presentation variant.
    #[arg(long, default_value = "desc_only")]
    pub variant: String,
    /// Seed code for revision/binary prompts.
    #[arg(long)]
    pub code: Option<String>,
    /// Expansion relations for revision prompts (defaults to all).
    #[arg(long)]
    pub siblings_only: bool,
    /// Template catalog directory overriding the built-in templates.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Shuffle option order with this seed instead of sorting.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: RunCommonArgs,
    /// Output predictions file (JSON-Lines).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PipelineRunArgs {
    #[command(flatten)]
    pub common: RunCommonArgs,
    /// Output directory for results.jsonl, report.json, report.md, manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the configured mode.
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: RunCommonArgs,
    /// Output directory (verification.json, verification.md, manifest.json).
    #[arg(long)]
    pub out: PathBuf,
    /// Override the verification setting (gold_expansion | labeled_candidates).
    #[arg(long)]
    pub setting: Option<String>,
}

/// Flags shared by the backend-calling commands. Every one of them
/// overrides the corresponding config-file field.
#[derive(Args, Debug)]
pub struct RunCommonArgs {
    #[command(flatten)]
    pub graph: GraphSourceArgs,
    /// Run config file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Corpus file (JSON-Lines).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Response cache path.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Template catalog directory.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Note-level parallelism.
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Shuffle revision options with this seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Restrict the run to one split (train | dev | test).
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalFormat {
    Markdown,
    Json,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub graph: GraphSourceArgs,
    /// Predictions file: one {"note_id": ..., "codes": [...]} per line.
    #[arg(long)]
    pub pred: PathBuf,
    /// Gold corpus file (JSON-Lines, corpus schema).
    #[arg(long)]
    pub gold: PathBuf,
    /// Output format on stdout.
    #[arg(long, value_enum, default_value = "markdown")]
    pub format: EvalFormat,
    /// Score predictions outside the tree as plain false positives
    /// instead of failing.
    #[arg(long)]
    pub lenient: bool,
    /// Label for the report row.
    #[arg(long, default_value = "run")]
    pub label: String,
}

#[derive(Args, Debug)]
pub struct CorpusValidateArgs {
    #[command(flatten)]
    pub graph: GraphSourceArgs,
    /// Corpus file to validate.
    #[arg(long)]
    pub corpus: PathBuf,
}
