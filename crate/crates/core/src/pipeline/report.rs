//! The side-by-side pipeline report: generation-only metrics next to
//! post-revision metrics, with macro and micro aggregation per level.

use num::BigRational;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use super::PipelineMode;
use crate::metrics::{to_f64, Aggregate, EvalReport, MetricsError, NoteScores};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct WarningCounts {
    /// Revisions that fell back to the seed (unparseable choice, empty
    /// expansion, or out-of-tree seed).
    pub parse_fallbacks: u64,
}

/// Aggregates for one column of the report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportSide {
    pub em: Aggregate,
    pub prefix1: Aggregate,
    pub prefix2: Aggregate,
    pub macro_por: BigRational,
}

impl ReportSide {
    fn from_scores(scores: Vec<NoteScores>) -> Result<Self, MetricsError> {
        let report = EvalReport::from_notes(scores)?;
        Ok(ReportSide {
            em: report.em,
            prefix1: report.prefix1,
            prefix2: report.prefix2,
            macro_por: report.macro_por,
        })
    }
}

impl Serialize for ReportSide {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("ReportSide", 4)?;
        s.serialize_field("em", &self.em)?;
        s.serialize_field("prefix1", &self.prefix1)?;
        s.serialize_field("prefix2", &self.prefix2)?;
        s.serialize_field("macro_por", &to_f64(&self.macro_por))?;
        s.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FullReport {
    pub mode: PipelineMode,
    pub notes_evaluated: usize,
    pub failed_notes: Vec<String>,
    pub generation: ReportSide,
    pub revised: ReportSide,
    pub warnings: WarningCounts,
    pub per_note_generation: Vec<NoteScores>,
    pub per_note_revised: Vec<NoteScores>,
}

impl FullReport {
    pub fn build(
        mode: PipelineMode,
        generation_scores: Vec<NoteScores>,
        revised_scores: Vec<NoteScores>,
        failed_notes: Vec<String>,
        warnings: WarningCounts,
    ) -> Result<Self, MetricsError> {
        let notes_evaluated = generation_scores.len();
        Ok(FullReport {
            mode,
            notes_evaluated,
            failed_notes,
            generation: ReportSide::from_scores(generation_scores.clone())?,
            revised: ReportSide::from_scores(revised_scores.clone())?,
            warnings,
            per_note_generation: generation_scores,
            per_note_revised: revised_scores,
        })
    }

    /// Markdown with the generation and post-revision columns side by
    /// side, one row per metric level, scaled to 0-100.
    pub fn to_markdown(&self) -> String {
        let pct = |r: &BigRational| format!("{:.1}", to_f64(r) * 100.0);
        let revised_label = match self.mode {
            PipelineMode::Oracle => "+ Oracle",
            PipelineMode::GenerationOnly => "Generation (no revision)",
            _ => "+ Verification",
        };
        let mut out = String::new();
        out.push_str(&format!(
            "| Metric | Generation | {revised_label} |\n|---|---|---|\n"
        ));
        for (name, gen, rev) in [
            ("F1 (EM)", &self.generation.em, &self.revised.em),
            ("F1 (P-1)", &self.generation.prefix1, &self.revised.prefix1),
            ("F1 (P-2)", &self.generation.prefix2, &self.revised.prefix2),
        ] {
            out.push_str(&format!(
                "| {name} | {} | {} |\n",
                pct(&gen.macro_f1),
                pct(&rev.macro_f1)
            ));
        }
        out.push_str(&format!(
            "| POR | {} | {} |\n",
            pct(&self.generation.macro_por),
            pct(&self.revised.macro_por)
        ));
        out.push_str(&format!(
            "\nNotes evaluated: {}; failed: {}; revision fallbacks: {}\n",
            self.notes_evaluated,
            self.failed_notes.len(),
            self.warnings.parse_fallbacks
        ));
        out
    }
}
