//! `verify`: the standalone verification task.

use anyhow::Result;
use serde_json::Value;

use icdverify::pipeline::{run_standalone_verification, PipelineContext, VerificationSetting};

use crate::args::VerifyArgs;
use crate::commands::{ensure_dir, prepare_run, write_text};

pub fn run(args: VerifyArgs) -> Result<i32> {
    let mut setup = prepare_run(&args.common)?;
    if let Some(setting) = &args.setting {
        setup.config.pipeline.verification.setting =
            serde_json::from_value::<VerificationSetting>(Value::String(setting.clone()))
                .map_err(|_| anyhow::anyhow!("unknown setting {setting:?}"))?;
    }
    ensure_dir(&args.out)?;

    let ctx = PipelineContext {
        tree: &setup.bundle.tree,
        graph: &setup.bundle.graph,
        catalog: &setup.catalog,
        gateway: &setup.gateway,
    };
    let outcome = run_standalone_verification(&setup.corpus, &ctx, &setup.config.pipeline)?;

    let json_path = args.out.join("verification.json");
    write_text(&json_path, &serde_json::to_string_pretty(&outcome)?)?;
    let md_path = args.out.join("verification.md");
    write_text(&md_path, &outcome.to_markdown())?;

    let mut manifest = setup.manifest;
    manifest.add_output(&json_path);
    manifest.add_output(&md_path);
    manifest.write(&setup.gateway.stats(), &args.out)?;

    println!("{}", outcome.to_markdown());
    Ok(0)
}
