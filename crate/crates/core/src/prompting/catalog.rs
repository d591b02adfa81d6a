//! The prompt template catalog.
//!
//! Templates ship compiled into the binary; a catalog directory given on
//! the command line overrides individual templates by file name
//! (`<name>.txt`). The catalog digest identifies the exact template set
//! of a run and goes into the run manifest.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::PromptError;

/// Bumped whenever the built-in template set changes.
pub const CATALOG_VERSION: &str = "1";

const BUILTIN: &[(&str, &str)] = &[
    (
        "generation_single_line",
        include_str!("templates/generation_single_line.txt"),
    ),
    (
        "generation_detailed",
        include_str!("templates/generation_detailed.txt"),
    ),
    ("generation_cot", include_str!("templates/generation_cot.txt")),
    (
        "generation_decomposition",
        include_str!("templates/generation_decomposition.txt"),
    ),
    (
        "generation_detailed_cot",
        include_str!("templates/generation_detailed_cot.txt"),
    ),
    ("format_code_only", include_str!("templates/format_code_only.txt")),
    ("format_desc_only", include_str!("templates/format_desc_only.txt")),
    (
        "format_code_then_desc",
        include_str!("templates/format_code_then_desc.txt"),
    ),
    (
        "format_desc_then_code",
        include_str!("templates/format_desc_then_code.txt"),
    ),
    (
        "revision_code_only",
        include_str!("templates/revision_code_only.txt"),
    ),
    (
        "revision_code_desc",
        include_str!("templates/revision_code_desc.txt"),
    ),
    (
        "revision_desc_only",
        include_str!("templates/revision_desc_only.txt"),
    ),
    ("revision_cot", include_str!("templates/revision_cot.txt")),
    (
        "binary_verification",
        include_str!("templates/binary_verification.txt"),
    ),
];

#[derive(Debug, Clone)]
pub struct PromptCatalog {
    templates: BTreeMap<String, String>,
}

impl PromptCatalog {
    pub fn builtin() -> Self {
        PromptCatalog {
            templates: BUILTIN
                .iter()
                .map(|(name, text)| (name.to_string(), text.to_string()))
                .collect(),
        }
    }

    /// Builtin catalog with any `<name>.txt` files found in `dir` layered
    /// on top.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut catalog = Self::builtin();
        for entry in std::fs::read_dir(dir)? {
            let entry = entry?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(name) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let text = std::fs::read_to_string(&path)?;
            catalog.templates.insert(name.to_string(), text);
        }
        Ok(catalog)
    }

    pub fn get(&self, name: &str) -> Result<&str, PromptError> {
        self.templates
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| PromptError::UnknownTemplate(name.to_string()))
    }

    /// Content hash over the full template set, in name order.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, text) in &self.templates {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            hasher.update(text.as_bytes());
            hasher.update([0u8]);
        }
        format!("{:x}", hasher.finalize())
    }
}
