//! `pipeline run`: the full generate -> expand -> revise flow with
//! results, reports, and a manifest in the output directory.

use std::io::Write;

use anyhow::{Context, Result};
use serde_json::Value;

use icdverify::pipeline::{
    run_full, run_standalone_verification, PipelineContext, PipelineMode,
};

use crate::args::PipelineRunArgs;
use crate::commands::{ensure_dir, prepare_run, write_text};

pub fn run(args: PipelineRunArgs) -> Result<i32> {
    let mut setup = prepare_run(&args.common)?;
    if let Some(mode) = &args.mode {
        setup.config.pipeline.mode =
            serde_json::from_value::<PipelineMode>(Value::String(mode.clone()))
                .map_err(|_| anyhow::anyhow!("unknown mode {mode:?}"))?;
    }
    ensure_dir(&args.out)?;

    let ctx = PipelineContext {
        tree: &setup.bundle.tree,
        graph: &setup.bundle.graph,
        catalog: &setup.catalog,
        gateway: &setup.gateway,
    };

    if setup.config.pipeline.mode == PipelineMode::StandaloneVerification {
        let outcome = run_standalone_verification(&setup.corpus, &ctx, &setup.config.pipeline)?;
        let json_path = args.out.join("verification.json");
        write_text(&json_path, &serde_json::to_string_pretty(&outcome)?)?;
        let md_path = args.out.join("verification.md");
        write_text(&md_path, &outcome.to_markdown())?;
        let mut manifest = setup.manifest;
        manifest.add_output(&json_path);
        manifest.add_output(&md_path);
        manifest.write(&setup.gateway.stats(), &args.out)?;
        return Ok(0);
    }

    let run = run_full(&setup.corpus, &ctx, &setup.config.pipeline)?;

    let results_path = args.out.join("results.jsonl");
    {
        let mut out = std::io::BufWriter::new(
            std::fs::File::create(&results_path)
                .with_context(|| format!("creating {}", results_path.display()))?,
        );
        for result in &run.note_results {
            serde_json::to_writer(&mut out, result)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
    }

    let report_path = args.out.join("report.json");
    write_text(&report_path, &serde_json::to_string_pretty(&run.report)?)?;
    let md_path = args.out.join("report.md");
    write_text(&md_path, &run.report.to_markdown())?;

    let failed = run.report.failed_notes.len();
    let mut manifest = setup.manifest;
    manifest.count_warning("failed_notes", failed as u64);
    manifest.count_warning("revision_fallbacks", run.report.warnings.parse_fallbacks);
    manifest.add_output(&results_path);
    manifest.add_output(&report_path);
    manifest.add_output(&md_path);
    manifest.write(&setup.gateway.stats(), &args.out)?;

    println!("{}", run.report.to_markdown());
    if failed > 0 {
        tracing::warn!(failed, "run finished with per-note failures");
        return Ok(2);
    }
    Ok(0)
}
