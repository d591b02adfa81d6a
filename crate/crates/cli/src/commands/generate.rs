//! `generate`: generation stage only, predictions to JSON-Lines.

use std::io::Write;

use anyhow::{Context, Result};
use serde::Serialize;

use icdverify::pipeline::{run_generation, PipelineContext};

use crate::args::GenerateArgs;
use crate::commands::prepare_run;

#[derive(Serialize)]
struct PredictionLine<'a> {
    note_id: &'a str,
    codes: Vec<String>,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    warnings: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    failed: &'a Option<String>,
}

pub fn run(args: GenerateArgs) -> Result<i32> {
    let setup = prepare_run(&args.common)?;
    let ctx = PipelineContext {
        tree: &setup.bundle.tree,
        graph: &setup.bundle.graph,
        catalog: &setup.catalog,
        gateway: &setup.gateway,
    };
    let run = run_generation(&setup.corpus, &ctx, &setup.config.pipeline)?;

    let mut out = std::io::BufWriter::new(
        std::fs::File::create(&args.out)
            .with_context(|| format!("creating {}", args.out.display()))?,
    );
    let mut parse_warnings = 0u64;
    for (note_id, outcome) in &run.outcomes {
        parse_warnings += outcome.warnings.len() as u64;
        let line = PredictionLine {
            note_id,
            codes: outcome.codes.iter().map(|c| c.display_form()).collect(),
            warnings: &outcome.warnings,
            failed: &outcome.failed,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;

    let failures = run.failures();
    let mut manifest = setup.manifest;
    manifest.count_warning("generation_parse", parse_warnings);
    manifest.count_warning("failed_notes", failures.len() as u64);
    manifest.add_output(&args.out);
    let dir = args
        .out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(std::path::Path::to_path_buf)
        .unwrap_or_else(|| std::path::PathBuf::from("."));
    manifest.write(&setup.gateway.stats(), &dir)?;

    if failures.is_empty() {
        Ok(0)
    } else {
        tracing::warn!(count = failures.len(), "some notes failed generation");
        Ok(2)
    }
}
