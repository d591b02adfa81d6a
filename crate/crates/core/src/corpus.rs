//! The annotated note corpus: JSON-Lines loading, validation against the
//! tabular tree, and split filtering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::icd_graph::{CodeId, TabularTree};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("duplicate note id {id} (lines {first} and {second})")]
    DuplicateId {
        id: String,
        first: usize,
        second: usize,
    },
    #[error("corpus failed validation:\n{}", violations.join("\n"))]
    Validation { violations: Vec<String> },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => f.write_str("train"),
            Split::Dev => f.write_str("dev"),
            Split::Test => f.write_str("test"),
        }
    }
}

/// One clinical note with its gold codes and, optionally, candidate codes
/// from an upstream system together with their binary labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedNote {
    pub id: String,
    pub text: String,
    pub gold_codes: BTreeSet<CodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_codes: Option<Vec<CodeId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_labels: Option<Vec<bool>>,
    pub split: Split,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub no_diagnosis: bool,
}

impl AnnotatedNote {
    fn check_shape(&self) -> Result<(), String> {
        if let (Some(codes), Some(labels)) = (&self.candidate_codes, &self.candidate_labels) {
            if codes.len() != labels.len() {
                return Err(format!(
                    "note {}: {} candidate codes but {} labels",
                    self.id,
                    codes.len(),
                    labels.len()
                ));
            }
        }
        if self.candidate_labels.is_some() && self.candidate_codes.is_none() {
            return Err(format!("note {}: candidate labels without codes", self.id));
        }
        if self.gold_codes.is_empty() && !self.no_diagnosis {
            return Err(format!(
                "note {}: empty gold codes without the no_diagnosis flag",
                self.id
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    notes: Vec<AnnotatedNote>,
}

impl Corpus {
    pub fn from_notes(notes: Vec<AnnotatedNote>) -> Result<Self, CorpusError> {
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, note) in notes.iter().enumerate() {
            if let Some(first) = seen.insert(&note.id, i + 1) {
                return Err(CorpusError::DuplicateId {
                    id: note.id.clone(),
                    first,
                    second: i + 1,
                });
            }
        }
        Ok(Corpus { notes })
    }

    pub fn notes(&self) -> &[AnnotatedNote] {
        &self.notes
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn split_counts(&self) -> BTreeMap<Split, usize> {
        let mut counts = BTreeMap::new();
        for note in &self.notes {
            *counts.entry(note.split).or_insert(0) += 1;
        }
        counts
    }

    pub fn filter_split(&self, split: Split) -> Corpus {
        Corpus {
            notes: self
                .notes
                .iter()
                .filter(|n| n.split == split)
                .cloned()
                .collect(),
        }
    }
}

/// Parse a JSON-Lines corpus. When a tree is given, every gold code must
/// exist in it and be billable; violations are collected and reported
/// together. Candidate codes from upstream systems are stored opaquely
/// and only checked for existence, as warnings.
pub fn load_corpus<R: Read>(
    source: R,
    tree: Option<&TabularTree>,
) -> Result<(Corpus, Vec<String>), CorpusError> {
    let reader = BufReader::new(source);
    let mut notes = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let note: AnnotatedNote =
            serde_json::from_str(&line).map_err(|e| CorpusError::Schema {
                line: lineno,
                message: e.to_string(),
            })?;
        note.check_shape().map_err(|message| CorpusError::Schema {
            line: lineno,
            message,
        })?;
        if let Some(first) = seen.insert(note.id.clone(), lineno) {
            return Err(CorpusError::DuplicateId {
                id: note.id,
                first,
                second: lineno,
            });
        }
        notes.push(note);
    }

    let mut warnings = Vec::new();
    if let Some(tree) = tree {
        let mut violations = Vec::new();
        for note in &notes {
            for gold in &note.gold_codes {
                if !tree.contains(gold) {
                    violations.push(format!("note {}: gold code {gold} not in tree", note.id));
                } else if !tree.is_billable(gold) {
                    violations.push(format!("note {}: gold code {gold} is not billable", note.id));
                }
            }
            for cand in note.candidate_codes.iter().flatten() {
                if !tree.contains(cand) {
                    warnings.push(format!(
                        "note {}: candidate code {cand} not in tree",
                        note.id
                    ));
                }
            }
        }
        if !violations.is_empty() {
            return Err(CorpusError::Validation { violations });
        }
    }

    Ok((Corpus { notes }, warnings))
}

pub fn load_corpus_file(
    path: &Path,
    tree: Option<&TabularTree>,
) -> Result<(Corpus, Vec<String>), CorpusError> {
    load_corpus(std::fs::File::open(path)?, tree)
}

/// One JSON object per line, in note order.
pub fn write_corpus<W: Write>(corpus: &Corpus, mut out: W) -> Result<(), CorpusError> {
    for note in corpus.notes() {
        let line = serde_json::to_string(note).expect("notes serialize cleanly");
        writeln!(out, "{line}")?;
    }
    Ok(())
}
