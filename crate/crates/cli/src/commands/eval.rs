//! `eval`: score a predictions file against a gold corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use icdverify::corpus::load_corpus_file;
use icdverify::icd_graph::CodeId;
use icdverify::metrics::{score_note, score_note_lenient, EvalReport};

use crate::args::{EvalArgs, EvalFormat};
use crate::config::load_graph;

#[derive(Deserialize)]
struct PredictionLine {
    note_id: String,
    codes: Vec<String>,
}

pub fn run(args: EvalArgs) -> Result<i32> {
    let bundle = load_graph(&args.graph)?;
    let (gold, warnings) = load_corpus_file(&args.gold, Some(&bundle.tree))
        .with_context(|| format!("loading gold corpus {}", args.gold.display()))?;
    for warning in &warnings {
        tracing::warn!(target: "corpus", "{warning}");
    }

    let file = std::fs::File::open(&args.pred)
        .with_context(|| format!("opening {}", args.pred.display()))?;
    let mut predictions: BTreeMap<String, BTreeSet<CodeId>> = BTreeMap::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: PredictionLine = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}", args.pred.display(), idx + 1))?;
        let mut codes = BTreeSet::new();
        for raw in &parsed.codes {
            codes.insert(CodeId::new(raw)?);
        }
        if predictions.insert(parsed.note_id.clone(), codes).is_some() {
            bail!("duplicate prediction for note {}", parsed.note_id);
        }
    }

    let known_ids: BTreeSet<&str> = gold.notes().iter().map(|n| n.id.as_str()).collect();
    let stray: Vec<&String> = predictions
        .keys()
        .filter(|id| !known_ids.contains(id.as_str()))
        .collect();
    if !stray.is_empty() {
        bail!(
            "predictions reference notes absent from the gold corpus: {}",
            stray
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        );
    }

    // Every gold note is scored; notes without predictions score against
    // the empty set.
    let empty = BTreeSet::new();
    let mut notes = gold.notes().to_vec();
    notes.sort_by(|a, b| a.id.cmp(&b.id));
    let mut scores = Vec::with_capacity(notes.len());
    for note in &notes {
        let pred = predictions.get(&note.id).unwrap_or(&empty);
        let score = if args.lenient {
            score_note_lenient(&bundle.tree, &note.id, pred, &note.gold_codes)?
        } else {
            score_note(&bundle.tree, &note.id, pred, &note.gold_codes)?
        };
        scores.push(score);
    }

    let report = EvalReport::from_notes(scores)?;
    match args.format {
        EvalFormat::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        EvalFormat::Markdown => print!("{}", report.to_markdown(&args.label)),
    }
    Ok(0)
}
