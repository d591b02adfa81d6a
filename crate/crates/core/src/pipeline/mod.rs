//! The generate -> expand -> verify pipeline, oracle selection, and the
//! standalone verification task.
//!
//! Each generated code is revised against its own expansion, then the
//! revised codes are deduplicated per note. Notes are processed
//! concurrently up to the configured parallelism with deterministic,
//! note-id-ordered output; the per-code revisions within a note run
//! sequentially. A failure on one note never aborts the run: the note is
//! reported as failed and scores zero.

mod report;
mod verification;

pub use report::{FullReport, ReportSide, WarningCounts};
pub use verification::{
    run_standalone_verification, BinaryReport, ExpansionKind, VerificationGridConfig,
    VerificationOutcome, VerificationReport, VerificationSetting,
};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotatedNote, Corpus};
use crate::expansion::{expand, CandidateSet, ExpandError, ExpansionConfig};
use crate::gateway::{Gateway, GatewayError, ModelRequest};
use crate::icd_graph::{CodeId, IndexGraph, TabularTree};
use crate::metrics::{self, MetricsError, NoteScores};
use crate::prompting::{
    build_generation_prompt, build_revision_prompt, parse_choice_response,
    parse_generation_response, GenerationPromptSpec, GenerationStyle, GenerationTarget,
    OptionOrdering, PromptCatalog, PromptError, RevisionPromptSpec, RevisionVariant,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("oracle mode requires gold codes; note {0} has none")]
    MissingGold(String),
    #[error("standalone verification needs {0}")]
    MissingVerificationInput(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Expand(#[from] ExpandError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    #[default]
    Full,
    GenerationOnly,
    Oracle,
    StandaloneVerification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub style: GenerationStyle,
    pub target: GenerationTarget,
    pub backend: String,
    #[serde(default = "default_generation_tokens")]
    pub max_output_tokens: u32,
    #[serde(default)]
    pub temperature: f64,
}

fn default_generation_tokens() -> u32 {
    1024
}

impl GenerationConfig {
    pub fn spec(&self) -> Result<GenerationPromptSpec, PromptError> {
        GenerationPromptSpec::new(self.style, self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevisionConfig {
    pub variant: RevisionVariant,
    #[serde(default)]
    pub ordering: OptionOrdering,
    pub backend: String,
    #[serde(default = "default_revision_tokens")]
    pub max_output_tokens: u32,
    #[serde(default)]
    pub temperature: f64,
}

fn default_revision_tokens() -> u32 {
    256
}

impl RevisionConfig {
    pub fn spec(&self) -> RevisionPromptSpec {
        RevisionPromptSpec {
            variant: self.variant,
            ordering: self.ordering,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub generation: GenerationConfig,
    #[serde(default)]
    pub expansion: ExpansionConfig,
    pub revision: RevisionConfig,
    #[serde(default)]
    pub mode: PipelineMode,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub verification: VerificationGridConfig,
}

fn default_parallelism() -> usize {
    1
}

impl PipelineConfig {
    pub fn validate(&self, corpus: &Corpus) -> Result<(), PipelineError> {
        self.generation.spec()?;
        if self.mode == PipelineMode::Oracle {
            for note in corpus.notes() {
                if note.gold_codes.is_empty() && !note.no_diagnosis {
                    return Err(PipelineError::MissingGold(note.id.clone()));
                }
            }
        }
        Ok(())
    }
}

/// Shared read-only state for a run.
pub struct PipelineContext<'a> {
    pub tree: &'a TabularTree,
    pub graph: &'a IndexGraph,
    pub catalog: &'a PromptCatalog,
    pub gateway: &'a Gateway,
}

/// Map over notes, concurrently when the `parallel` feature is on and
/// parallelism > 1. Output order always matches input order.
fn map_notes<'a, T, F>(notes: &'a [AnnotatedNote], parallelism: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&'a AnnotatedNote) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        if parallelism > 1 {
            use rayon::prelude::*;
            match rayon::ThreadPoolBuilder::new()
                .num_threads(parallelism)
                .build()
            {
                Ok(pool) => return pool.install(|| notes.par_iter().map(|n| f(n)).collect()),
                Err(e) => {
                    tracing::warn!(error = %e, "thread pool creation failed; running sequentially")
                }
            }
        }
    }
    let _ = parallelism;
    notes.iter().map(f).collect()
}

/// One note's generation outcome before revision.
#[derive(Debug, Clone)]
pub struct GenerationOutcome {
    pub note_id: String,
    pub codes: Vec<CodeId>,
    pub warnings: Vec<String>,
    pub failed: Option<String>,
}

fn generate_for_note(
    ctx: &PipelineContext<'_>,
    cfg: &PipelineConfig,
    note: &AnnotatedNote,
) -> GenerationOutcome {
    let spec = match cfg.generation.spec() {
        Ok(spec) => spec,
        Err(e) => {
            return GenerationOutcome {
                note_id: note.id.clone(),
                codes: Vec::new(),
                warnings: Vec::new(),
                failed: Some(e.to_string()),
            }
        }
    };
    let prompt = match build_generation_prompt(ctx.catalog, &note.text, &spec) {
        Ok(p) => p,
        Err(e) => {
            return GenerationOutcome {
                note_id: note.id.clone(),
                codes: Vec::new(),
                warnings: Vec::new(),
                failed: Some(e.to_string()),
            }
        }
    };
    let mut request = ModelRequest::new(&cfg.generation.backend, prompt);
    request.max_output_tokens = cfg.generation.max_output_tokens;
    request.temperature = cfg.generation.temperature;
    match ctx.gateway.complete(&request) {
        Ok(response) => {
            let parsed = parse_generation_response(&response.text);
            let mut seen = BTreeSet::new();
            let codes: Vec<CodeId> = parsed
                .entries
                .iter()
                .filter_map(|e| e.code.clone())
                .filter(|c| seen.insert(c.clone()))
                .collect();
            GenerationOutcome {
                note_id: note.id.clone(),
                codes,
                warnings: parsed.warnings,
                failed: None,
            }
        }
        Err(e) => GenerationOutcome {
            note_id: note.id.clone(),
            codes: Vec::new(),
            warnings: Vec::new(),
            failed: Some(e.to_string()),
        },
    }
}

/// Generation results for a whole corpus, keyed by note id.
pub struct GenerationRun {
    pub outcomes: BTreeMap<String, GenerationOutcome>,
}

impl GenerationRun {
    pub fn predictions(&self) -> BTreeMap<String, Vec<CodeId>> {
        self.outcomes
            .iter()
            .map(|(id, o)| (id.clone(), o.codes.clone()))
            .collect()
    }

    pub fn failures(&self) -> BTreeMap<String, String> {
        self.outcomes
            .iter()
            .filter_map(|(id, o)| o.failed.clone().map(|f| (id.clone(), f)))
            .collect()
    }
}

/// Run the generation stage alone.
pub fn run_generation(
    corpus: &Corpus,
    ctx: &PipelineContext<'_>,
    cfg: &PipelineConfig,
) -> Result<GenerationRun, PipelineError> {
    if corpus.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    let notes = sorted_notes(corpus);
    let outcomes = map_notes(&notes, cfg.parallelism, |note| {
        generate_for_note(ctx, cfg, note)
    });
    Ok(GenerationRun {
        outcomes: outcomes
            .into_iter()
            .map(|o| (o.note_id.clone(), o))
            .collect(),
    })
}

fn sorted_notes(corpus: &Corpus) -> Vec<AnnotatedNote> {
    let mut notes = corpus.notes().to_vec();
    notes.sort_by(|a, b| a.id.cmp(&b.id));
    notes
}

/// Audit trail for one generated code through expansion and revision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodeTrace {
    pub seed: CodeId,
    pub candidates: Vec<CodeId>,
    pub chosen: CodeId,
    pub fallback_used: bool,
}

/// Revise one code against its expansion via the model. Falls back to
/// the seed on empty expansions or unparseable choices; seeds outside
/// the tabular tree pass through unrevised with a warning.
pub fn revise_code(
    ctx: &PipelineContext<'_>,
    cfg: &PipelineConfig,
    note_text: &str,
    seed: &CodeId,
) -> Result<CodeTrace, PipelineError> {
    if !ctx.tree.contains(seed) {
        tracing::warn!(seed = %seed, "seed outside the tabular tree passes through unrevised");
        return Ok(CodeTrace {
            seed: seed.clone(),
            candidates: Vec::new(),
            chosen: seed.clone(),
            fallback_used: true,
        });
    }
    let candidates = expand(ctx.tree, ctx.graph, seed, &cfg.expansion)?;
    revise_against_candidates(ctx, cfg, note_text, seed, candidates)
}

fn revise_against_candidates(
    ctx: &PipelineContext<'_>,
    cfg: &PipelineConfig,
    note_text: &str,
    seed: &CodeId,
    candidates: CandidateSet,
) -> Result<CodeTrace, PipelineError> {
    let candidate_codes: Vec<CodeId> = candidates.codes().cloned().collect();
    if candidates.is_empty() {
        return Ok(CodeTrace {
            seed: seed.clone(),
            candidates: candidate_codes,
            chosen: seed.clone(),
            fallback_used: true,
        });
    }
    if candidates.len() == 1 {
        // A single option is a forced choice; skip the model call.
        let only = candidate_codes[0].clone();
        return Ok(CodeTrace {
            seed: seed.clone(),
            candidates: candidate_codes,
            chosen: only,
            fallback_used: false,
        });
    }
    let (prompt, ordered) = build_revision_prompt(
        ctx.catalog,
        note_text,
        &candidates,
        ctx.tree,
        &cfg.revision.spec(),
    )?;
    let mut request = ModelRequest::new(&cfg.revision.backend, prompt);
    request.max_output_tokens = cfg.revision.max_output_tokens;
    request.temperature = cfg.revision.temperature;
    let response = ctx.gateway.complete(&request)?;
    match parse_choice_response(&response.text, ordered.len()) {
        Ok(index) => Ok(CodeTrace {
            seed: seed.clone(),
            candidates: candidate_codes,
            chosen: ordered[index].clone(),
            fallback_used: false,
        }),
        Err(_) => Ok(CodeTrace {
            seed: seed.clone(),
            candidates: candidate_codes,
            chosen: seed.clone(),
            fallback_used: true,
        }),
    }
}

/// Upper-bound selection: the lexicographically smallest candidate that
/// is a gold code, or the seed when the gold codes lie outside the
/// expansion entirely.
pub fn oracle_select(
    seed: &CodeId,
    candidates: &CandidateSet,
    gold: &BTreeSet<CodeId>,
) -> CodeId {
    candidates
        .codes()
        .filter(|c| gold.contains(*c))
        .min()
        .cloned()
        .unwrap_or_else(|| seed.clone())
}

/// One note's full pipeline result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoteResult {
    pub note_id: String,
    pub generated: Vec<CodeId>,
    pub revised: Vec<CodeId>,
    pub per_code_trace: Vec<CodeTrace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed: Option<String>,
}

/// Output of a full pipeline run.
pub struct FullRun {
    pub note_results: Vec<NoteResult>,
    pub report: FullReport,
}

fn process_note(
    ctx: &PipelineContext<'_>,
    cfg: &PipelineConfig,
    note: &AnnotatedNote,
) -> NoteResult {
    let generation = generate_for_note(ctx, cfg, note);
    if let Some(failed) = generation.failed {
        return NoteResult {
            note_id: note.id.clone(),
            generated: Vec::new(),
            revised: Vec::new(),
            per_code_trace: Vec::new(),
            failed: Some(failed),
        };
    }

    let mut traces = Vec::with_capacity(generation.codes.len());
    for seed in &generation.codes {
        let trace = match cfg.mode {
            PipelineMode::GenerationOnly => CodeTrace {
                seed: seed.clone(),
                candidates: Vec::new(),
                chosen: seed.clone(),
                fallback_used: false,
            },
            PipelineMode::Oracle => {
                if !ctx.tree.contains(seed) {
                    CodeTrace {
                        seed: seed.clone(),
                        candidates: Vec::new(),
                        chosen: seed.clone(),
                        fallback_used: true,
                    }
                } else {
                    match expand(ctx.tree, ctx.graph, seed, &cfg.expansion) {
                        Ok(candidates) => {
                            let chosen = oracle_select(seed, &candidates, &note.gold_codes);
                            let fallback_used = chosen == *seed
                                && !candidates.codes().any(|c| note.gold_codes.contains(c));
                            CodeTrace {
                                seed: seed.clone(),
                                candidates: candidates.codes().cloned().collect(),
                                chosen,
                                fallback_used,
                            }
                        }
                        Err(e) => {
                            return NoteResult {
                                note_id: note.id.clone(),
                                generated: generation.codes.clone(),
                                revised: Vec::new(),
                                per_code_trace: traces,
                                failed: Some(e.to_string()),
                            }
                        }
                    }
                }
            }
            PipelineMode::Full | PipelineMode::StandaloneVerification => {
                match revise_code(ctx, cfg, &note.text, seed) {
                    Ok(trace) => trace,
                    Err(e) => {
                        return NoteResult {
                            note_id: note.id.clone(),
                            generated: generation.codes.clone(),
                            revised: Vec::new(),
                            per_code_trace: traces,
                            failed: Some(e.to_string()),
                        }
                    }
                }
            }
        };
        traces.push(trace);
    }

    // Duplicate revised codes within a note collapse to one.
    let mut seen = BTreeSet::new();
    let revised: Vec<CodeId> = traces
        .iter()
        .map(|t| t.chosen.clone())
        .filter(|c| seen.insert(c.clone()))
        .collect();

    NoteResult {
        note_id: note.id.clone(),
        generated: generation.codes,
        revised,
        per_code_trace: traces,
        failed: None,
    }
}

/// Run the full pipeline: generation, per-code revision (or oracle
/// selection), note-level dedup, and metrics against the gold codes for
/// both the raw generation and the revised output.
pub fn run_full(
    corpus: &Corpus,
    ctx: &PipelineContext<'_>,
    cfg: &PipelineConfig,
) -> Result<FullRun, PipelineError> {
    if corpus.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    cfg.validate(corpus)?;

    let notes = sorted_notes(corpus);
    let note_results = map_notes(&notes, cfg.parallelism, |note| process_note(ctx, cfg, note));

    let mut generation_scores = Vec::with_capacity(note_results.len());
    let mut revised_scores = Vec::with_capacity(note_results.len());
    let mut fallbacks = 0u64;
    for (note, result) in notes.iter().zip(&note_results) {
        debug_assert_eq!(note.id, result.note_id);
        if result.failed.is_some() {
            let gold_len = note.gold_codes.len() as u64;
            generation_scores.push(zero_scores(&note.id, gold_len));
            revised_scores.push(zero_scores(&note.id, gold_len));
            continue;
        }
        fallbacks += result
            .per_code_trace
            .iter()
            .filter(|t| t.fallback_used)
            .count() as u64;
        let generated: BTreeSet<CodeId> = result.generated.iter().cloned().collect();
        let revised: BTreeSet<CodeId> = result.revised.iter().cloned().collect();
        generation_scores.push(metrics::score_note_lenient(
            ctx.tree,
            &note.id,
            &generated,
            &note.gold_codes,
        )?);
        revised_scores.push(metrics::score_note_lenient(
            ctx.tree,
            &note.id,
            &revised,
            &note.gold_codes,
        )?);
    }

    let failed_notes: Vec<String> = note_results
        .iter()
        .filter(|r| r.failed.is_some())
        .map(|r| r.note_id.clone())
        .collect();
    let report = FullReport::build(
        cfg.mode,
        generation_scores,
        revised_scores,
        failed_notes,
        WarningCounts {
            parse_fallbacks: fallbacks,
        },
    )?;

    Ok(FullRun {
        note_results,
        report,
    })
}

fn zero_scores(note_id: &str, gold_len: u64) -> NoteScores {
    NoteScores {
        note_id: note_id.to_string(),
        em: metrics::NoteEval::zeroed(note_id, gold_len),
        prefix1: metrics::NoteEval::zeroed(note_id, gold_len),
        prefix2: metrics::NoteEval::zeroed(note_id, gold_len),
        por: num::BigRational::from_integer(0.into()),
    }
}
