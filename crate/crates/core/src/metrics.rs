//! Exact and hierarchy-aware evaluation: per-note precision/recall/F1 on
//! exact matches, prefix-n relaxed matches, the prefix overlap ratio, and
//! verification accuracy. All scores are exact rationals; they only turn
//! into floats at serialization time.

use std::collections::{BTreeMap, BTreeSet};

use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::ToPrimitive;
use num::{One, Zero};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::icd_graph::{CodeId, CodeKind, GraphError, TabularTree};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("unknown codes: {}", codes.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(", "))]
    UnknownCodes { codes: Vec<CodeId> },
    #[error("{code} is a {kind:?}; only category-level codes and below can be scored")]
    AboveCategory { code: CodeId, kind: CodeKind },
    #[error("empty decision list")]
    EmptyDecisions,
    #[error("empty per-note list")]
    EmptyNotes,
    #[error("duplicate note id {0}")]
    DuplicateNoteId(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn ratio(n: u64, d: u64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn serialize_rational<S: Serializer>(r: &BigRational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(to_f64(r))
}

/// Exact-match counts and scores for one note at one metric level.
///
/// Empty-set rule: both sides empty scores 1.0 across the board (a note
/// with no codable diagnoses and no predictions is a correct outcome);
/// exactly one side empty scores 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoteEval {
    pub note_id: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    #[serde(serialize_with = "serialize_rational")]
    pub precision: BigRational,
    #[serde(serialize_with = "serialize_rational")]
    pub recall: BigRational,
    #[serde(serialize_with = "serialize_rational")]
    pub f1: BigRational,
}

fn prf(tp: u64, fp: u64, fn_: u64) -> (BigRational, BigRational, BigRational) {
    if tp == 0 && fp == 0 && fn_ == 0 {
        return (BigRational::one(), BigRational::one(), BigRational::one());
    }
    let precision = if tp + fp == 0 {
        BigRational::zero()
    } else {
        ratio(tp, tp + fp)
    };
    let recall = if tp + fn_ == 0 {
        BigRational::zero()
    } else {
        ratio(tp, tp + fn_)
    };
    let denom = &precision + &recall;
    let f1 = if denom.is_zero() {
        BigRational::zero()
    } else {
        BigRational::from_integer(BigInt::from(2)) * &precision * &recall / denom
    };
    (precision, recall, f1)
}

impl NoteEval {
    /// Scores derived from counts under the empty-set rule.
    pub fn from_counts(note_id: &str, tp: u64, fp: u64, fn_: u64) -> NoteEval {
        let (precision, recall, f1) = prf(tp, fp, fn_);
        NoteEval {
            note_id: note_id.to_string(),
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }

    /// Forced zero scores, used for notes whose processing failed. They
    /// stay in the report denominator and score 0 regardless of the
    /// empty-set rule.
    pub fn zeroed(note_id: &str, gold_len: u64) -> NoteEval {
        NoteEval {
            note_id: note_id.to_string(),
            tp: 0,
            fp: 0,
            fn_: gold_len,
            precision: BigRational::zero(),
            recall: BigRational::zero(),
            f1: BigRational::zero(),
        }
    }
}

fn eval_from_counts(note_id: &str, tp: u64, fp: u64, fn_: u64) -> NoteEval {
    NoteEval::from_counts(note_id, tp, fp, fn_)
}

/// Exact-match precision/recall/F1 over code sets.
pub fn exact_prf(note_id: &str, pred: &BTreeSet<CodeId>, gold: &BTreeSet<CodeId>) -> NoteEval {
    let tp = pred.intersection(gold).count() as u64;
    let fp = pred.len() as u64 - tp;
    let fn_ = gold.len() as u64 - tp;
    eval_from_counts(note_id, tp, fp, fn_)
}

/// The ancestor `n` tree-steps above `code`, clamped at the three-character
/// category node. Blocks and chapters are never truncation targets.
pub fn truncate(tree: &TabularTree, code: &CodeId, n: u32) -> Result<CodeId, MetricsError> {
    let node = tree.require(code)?;
    if !node.kind.is_codeable() {
        return Err(MetricsError::AboveCategory {
            code: code.clone(),
            kind: node.kind,
        });
    }
    let steps = (n as i32).min(node.depth).max(0);
    let mut current = code.clone();
    for _ in 0..steps {
        current = tree
            .require(&current)?
            .parent
            .clone()
            .expect("depth bounds the parent chain");
    }
    Ok(current)
}

fn check_known(tree: &TabularTree, sets: &[&BTreeSet<CodeId>]) -> Result<(), MetricsError> {
    let unknown: Vec<CodeId> = sets
        .iter()
        .flat_map(|s| s.iter())
        .filter(|c| !tree.contains(c))
        .cloned()
        .collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(MetricsError::UnknownCodes { codes: unknown })
    }
}

/// Prefix-n relaxed precision/recall/F1: both sides are truncated `n`
/// steps up the tree, then matched as count multisets over the truncated
/// classes (tp is the sum of per-class minimum counts).
pub fn prefix_prf(
    tree: &TabularTree,
    note_id: &str,
    pred: &BTreeSet<CodeId>,
    gold: &BTreeSet<CodeId>,
    n: u32,
) -> Result<NoteEval, MetricsError> {
    check_known(tree, &[pred, gold])?;
    let count = |side: &BTreeSet<CodeId>| -> Result<BTreeMap<CodeId, u64>, MetricsError> {
        let mut counts = BTreeMap::new();
        for code in side {
            *counts.entry(truncate(tree, code, n)?).or_insert(0) += 1;
        }
        Ok(counts)
    };
    let pred_counts = count(pred)?;
    let gold_counts = count(gold)?;
    let mut tp = 0u64;
    for (class, p) in &pred_counts {
        if let Some(g) = gold_counts.get(class) {
            tp += (*p).min(*g);
        }
    }
    let fp = pred.len() as u64 - tp;
    let fn_ = gold.len() as u64 - tp;
    Ok(eval_from_counts(note_id, tp, fp, fn_))
}

/// Pairwise hierarchical overlap: shared-ancestry depth over the deeper
/// code's depth, both measured from the category level. Zero when the
/// codes share no ancestor at category level or below.
fn overlap(tree: &TabularTree, a: &CodeId, b: &CodeId) -> Result<BigRational, MetricsError> {
    let node_a = tree.require(a)?;
    let node_b = tree.require(b)?;
    for node in [node_a, node_b] {
        if !node.kind.is_codeable() {
            return Err(MetricsError::AboveCategory {
                code: node.id.clone(),
                kind: node.kind,
            });
        }
    }
    let Some((_, dca_depth)) = tree.deepest_common_ancestor(a, b)? else {
        return Ok(BigRational::zero());
    };
    if dca_depth < 0 {
        return Ok(BigRational::zero());
    }
    let max_depth = node_a.depth.max(node_b.depth);
    Ok(ratio(1 + dca_depth as u64, 1 + max_depth as u64))
}

fn directed_overlap(
    tree: &TabularTree,
    from: &BTreeSet<CodeId>,
    to: &BTreeSet<CodeId>,
) -> Result<BigRational, MetricsError> {
    let mut total = BigRational::zero();
    for a in from {
        let mut best = BigRational::zero();
        for b in to {
            let o = overlap(tree, a, b)?;
            if o > best {
                best = o;
            }
        }
        total += best;
    }
    Ok(total / BigRational::from_integer(BigInt::from(from.len() as u64)))
}

/// Prefix overlap ratio: the harmonic mean of the two directed
/// best-overlap means. Same empty-set rule as [`exact_prf`].
pub fn por(
    tree: &TabularTree,
    pred: &BTreeSet<CodeId>,
    gold: &BTreeSet<CodeId>,
) -> Result<BigRational, MetricsError> {
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => return Ok(BigRational::one()),
        (true, false) | (false, true) => return Ok(BigRational::zero()),
        (false, false) => {}
    }
    check_known(tree, &[pred, gold])?;
    let forward = directed_overlap(tree, pred, gold)?;
    let backward = directed_overlap(tree, gold, pred)?;
    let denom = &forward + &backward;
    if denom.is_zero() {
        return Ok(BigRational::zero());
    }
    Ok(BigRational::from_integer(BigInt::from(2)) * forward * backward / denom)
}

/// Fraction of decisions whose chosen code equals the gold code.
pub fn verification_accuracy(
    decisions: &[(CodeId, CodeId)],
) -> Result<BigRational, MetricsError> {
    if decisions.is_empty() {
        return Err(MetricsError::EmptyDecisions);
    }
    let correct = decisions.iter().filter(|(c, g)| c == g).count() as u64;
    Ok(ratio(correct, decisions.len() as u64))
}

/// Corpus-level aggregation of one metric level: macro is the unweighted
/// mean of per-note F1 (the headline number), micro pools tp/fp/fn.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    #[serde(serialize_with = "serialize_rational")]
    pub macro_precision: BigRational,
    #[serde(serialize_with = "serialize_rational")]
    pub macro_recall: BigRational,
    #[serde(serialize_with = "serialize_rational")]
    pub macro_f1: BigRational,
    #[serde(serialize_with = "serialize_rational")]
    pub micro_precision: BigRational,
    #[serde(serialize_with = "serialize_rational")]
    pub micro_recall: BigRational,
    #[serde(serialize_with = "serialize_rational")]
    pub micro_f1: BigRational,
}

pub fn aggregate(per_note: &[NoteEval]) -> Result<Aggregate, MetricsError> {
    if per_note.is_empty() {
        return Err(MetricsError::EmptyNotes);
    }
    let mut seen = BTreeSet::new();
    for note in per_note {
        if !seen.insert(&note.note_id) {
            return Err(MetricsError::DuplicateNoteId(note.note_id.clone()));
        }
    }
    let n = BigRational::from_integer(BigInt::from(per_note.len() as u64));
    let mean = |select: fn(&NoteEval) -> &BigRational| -> BigRational {
        per_note.iter().map(select).sum::<BigRational>() / &n
    };
    let tp: u64 = per_note.iter().map(|e| e.tp).sum();
    let fp: u64 = per_note.iter().map(|e| e.fp).sum();
    let fn_: u64 = per_note.iter().map(|e| e.fn_).sum();
    let (micro_precision, micro_recall, micro_f1) = prf(tp, fp, fn_);
    Ok(Aggregate {
        macro_precision: mean(|e| &e.precision),
        macro_recall: mean(|e| &e.recall),
        macro_f1: mean(|e| &e.f1),
        micro_precision,
        micro_recall,
        micro_f1,
    })
}

/// All four metric levels for one note.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoteScores {
    pub note_id: String,
    pub em: NoteEval,
    pub prefix1: NoteEval,
    pub prefix2: NoteEval,
    #[serde(serialize_with = "serialize_rational")]
    pub por: BigRational,
}

pub fn score_note(
    tree: &TabularTree,
    note_id: &str,
    pred: &BTreeSet<CodeId>,
    gold: &BTreeSet<CodeId>,
) -> Result<NoteScores, MetricsError> {
    Ok(NoteScores {
        note_id: note_id.to_string(),
        em: exact_prf(note_id, pred, gold),
        prefix1: prefix_prf(tree, note_id, pred, gold, 1)?,
        prefix2: prefix_prf(tree, note_id, pred, gold, 2)?,
        por: por(tree, pred, gold)?,
    })
}

/// Like [`score_note`] but tolerant of predicted codes outside the tree:
/// each one counts as a false positive at every level and contributes
/// zero overlap to POR. Gold codes must still be known. This is how
/// pipeline output is scored, since generation may emit codes that do
/// not exist.
pub fn score_note_lenient(
    tree: &TabularTree,
    note_id: &str,
    pred: &BTreeSet<CodeId>,
    gold: &BTreeSet<CodeId>,
) -> Result<NoteScores, MetricsError> {
    check_known(tree, &[gold])?;
    let known: BTreeSet<CodeId> = pred.iter().filter(|c| tree.contains(c)).cloned().collect();
    let unknown = (pred.len() - known.len()) as u64;

    let em = exact_prf(note_id, pred, gold);
    let relax = |n: u32| -> Result<NoteEval, MetricsError> {
        let base = prefix_prf(tree, note_id, &known, gold, n)?;
        Ok(NoteEval::from_counts(
            note_id,
            base.tp,
            base.fp + unknown,
            base.fn_,
        ))
    };

    let por = match (pred.is_empty(), gold.is_empty()) {
        (true, true) => BigRational::one(),
        (true, false) | (false, true) => BigRational::zero(),
        (false, false) => {
            if known.is_empty() {
                BigRational::zero()
            } else {
                let forward_sum = {
                    let mut total = BigRational::zero();
                    for a in &known {
                        let mut best = BigRational::zero();
                        for b in gold {
                            let o = overlap(tree, a, b)?;
                            if o > best {
                                best = o;
                            }
                        }
                        total += best;
                    }
                    total
                };
                let forward =
                    forward_sum / BigRational::from_integer(BigInt::from(pred.len() as u64));
                let backward = directed_overlap(tree, gold, &known)?;
                let denom = &forward + &backward;
                if denom.is_zero() {
                    BigRational::zero()
                } else {
                    BigRational::from_integer(BigInt::from(2)) * forward * backward / denom
                }
            }
        }
    };

    Ok(NoteScores {
        note_id: note_id.to_string(),
        em,
        prefix1: relax(1)?,
        prefix2: relax(2)?,
        por,
    })
}

pub type NoteInput = (String, BTreeSet<CodeId>, BTreeSet<CodeId>);

/// Score many notes sequentially.
pub fn evaluate_notes_seq(
    tree: &TabularTree,
    items: &[NoteInput],
) -> Vec<Result<NoteScores, MetricsError>> {
    items
        .iter()
        .map(|(id, pred, gold)| score_note(tree, id, pred, gold))
        .collect()
}

/// Score many notes, in parallel when the `parallel` feature is enabled.
pub fn evaluate_notes(
    tree: &TabularTree,
    items: &[NoteInput],
) -> Vec<Result<NoteScores, MetricsError>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items
            .par_iter()
            .map(|(id, pred, gold)| score_note(tree, id, pred, gold))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        evaluate_notes_seq(tree, items)
    }
}

/// Corpus-level report: per-note scores plus macro and micro rows. Micro
/// pooling is undefined for POR, so the corpus POR is macro-only.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_note: Vec<NoteScores>,
    pub em: Aggregate,
    pub prefix1: Aggregate,
    pub prefix2: Aggregate,
    pub macro_por: BigRational,
}

impl EvalReport {
    pub fn from_notes(per_note: Vec<NoteScores>) -> Result<Self, MetricsError> {
        let em: Vec<NoteEval> = per_note.iter().map(|s| s.em.clone()).collect();
        let p1: Vec<NoteEval> = per_note.iter().map(|s| s.prefix1.clone()).collect();
        let p2: Vec<NoteEval> = per_note.iter().map(|s| s.prefix2.clone()).collect();
        let n = BigRational::from_integer(BigInt::from(per_note.len().max(1) as u64));
        let macro_por = per_note.iter().map(|s| &s.por).sum::<BigRational>() / n;
        Ok(EvalReport {
            em: aggregate(&em)?,
            prefix1: aggregate(&p1)?,
            prefix2: aggregate(&p2)?,
            macro_por,
            per_note,
        })
    }

    /// Markdown table with the standard column layout:
    /// F1 (EM), F1 (P-1), F1 (P-2), POR, scaled to 0-100.
    pub fn to_markdown(&self, label: &str) -> String {
        let pct = |r: &BigRational| format!("{:.1}", to_f64(r) * 100.0);
        let mut out = String::new();
        out.push_str("| Run | F1 (EM) | F1 (P-1) | F1 (P-2) | POR |\n");
        out.push_str("|---|---|---|---|---|\n");
        out.push_str(&format!(
            "| {label} (macro) | {} | {} | {} | {} |\n",
            pct(&self.em.macro_f1),
            pct(&self.prefix1.macro_f1),
            pct(&self.prefix2.macro_f1),
            pct(&self.macro_por),
        ));
        out.push_str(&format!(
            "| {label} (micro) | {} | {} | {} | - |\n",
            pct(&self.em.micro_f1),
            pct(&self.prefix1.micro_f1),
            pct(&self.prefix2.micro_f1),
        ));
        out
    }
}

impl Serialize for EvalReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("EvalReport", 5)?;
        s.serialize_field("em", &self.em)?;
        s.serialize_field("prefix1", &self.prefix1)?;
        s.serialize_field("prefix2", &self.prefix2)?;
        s.serialize_field("macro_por", &to_f64(&self.macro_por))?;
        s.serialize_field("per_note", &self.per_note)?;
        s.end()
    }
}
