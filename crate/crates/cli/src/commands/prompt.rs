//! `prompt preview`: render any prompt family to stdout without backend
//! calls.

use anyhow::{bail, Context, Result};
use serde_json::Value;

use icdverify::expansion::{expand, ExpansionConfig};
use icdverify::icd_graph::CodeId;
use icdverify::prompting::{
    build_binary_verification_prompt, build_generation_prompt, build_revision_prompt,
    GenerationPromptSpec, GenerationStyle, GenerationTarget, OptionOrdering, PromptCatalog,
    RevisionPromptSpec, RevisionVariant,
};

use crate::args::{PromptKind, PromptPreviewArgs};
use crate::config::load_graph;

fn parse_variant<T: serde::de::DeserializeOwned>(name: &str, what: &str) -> Result<T> {
    serde_json::from_value(Value::String(name.to_string()))
        .map_err(|_| anyhow::anyhow!("unknown {what} {name:?}"))
}

pub fn preview(args: PromptPreviewArgs) -> Result<i32> {
    let note = std::fs::read_to_string(&args.note_file)
        .with_context(|| format!("reading {}", args.note_file.display()))?;
    let catalog = match &args.catalog {
        Some(dir) => PromptCatalog::from_dir(dir)?,
        None => PromptCatalog::builtin(),
    };

    match args.kind {
        PromptKind::Generation => {
            let style: GenerationStyle = parse_variant(&args.style, "style")?;
            let target: GenerationTarget = parse_variant(&args.target, "target")?;
            let spec = GenerationPromptSpec::new(style, target)?;
            print!("{}", build_generation_prompt(&catalog, &note, &spec)?);
        }
        PromptKind::Revision => {
            let Some(code) = &args.code else {
                bail!("--code is required for revision prompts");
            };
            let bundle = load_graph(&args.graph)?;
            let seed = CodeId::new(code)?;
            let cfg = if args.siblings_only {
                ExpansionConfig::siblings_only()
            } else {
                ExpansionConfig::default()
            };
            let candidates = expand(&bundle.tree, &bundle.graph, &seed, &cfg)?;
            let variant: RevisionVariant = parse_variant(&args.variant, "variant")?;
            let spec = RevisionPromptSpec {
                variant,
                ordering: match args.seed {
                    Some(seed) => OptionOrdering::SeededShuffle(seed),
                    None => OptionOrdering::Sorted,
                },
            };
            let (prompt, _) =
                build_revision_prompt(&catalog, &note, &candidates, &bundle.tree, &spec)?;
            print!("{prompt}");
        }
        PromptKind::Binary => {
            let Some(code) = &args.code else {
                bail!("--code is required for binary prompts");
            };
            let bundle = load_graph(&args.graph)?;
            let id = CodeId::new(code)?;
            let description = bundle
                .tree
                .node(&id)
                .map(|n| n.description.clone())
                .unwrap_or_else(|| "no official description available".to_string());
            print!(
                "{}",
                build_binary_verification_prompt(&catalog, &note, &id, &description)?
            );
        }
    }
    Ok(0)
}
