//! Prompt construction and response parsing.
//!
//! Every prompt family is rendered from a versioned template catalog with
//! `${note}` / `${options}` style placeholders. Construction is strictly
//! deterministic: the same inputs always produce the same bytes. Parsers
//! are total over arbitrary byte strings; they return values or errors,
//! never panic.
//!
//! The single-line generation template is fixed text; the detailed, CoT,
//! and decomposition templates are this project's own wording (structured
//! around the MEAT documentation principle and a phrase-extraction stage)
//! and are versioned through the catalog digest.

mod catalog;
mod parse;

pub use catalog::{PromptCatalog, CATALOG_VERSION};
pub use parse::{
    extract_first_json, parse_binary_response, parse_choice_response,
    parse_generation_response, render_generation_json, GenerationEntry, ParsedGeneration,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expansion::CandidateSet;
use crate::icd_graph::{CodeId, TabularTree};

/// Marker line that separates the note from the enumerated options in
/// every revision template. Mock backends key on it.
pub const OPTIONS_MARKER: &str = "Options:";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("note text is empty")]
    EmptyNote,
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error("candidate {0} has no description in the tabular tree")]
    MissingDescription(CodeId),
    #[error("single_line style only supports the code_only target")]
    SingleLineTarget,
    #[error("no parseable option label in response: {excerpt:?}")]
    UnparseableChoice { excerpt: String },
    #[error("no yes/no answer in response: {excerpt:?}")]
    UnparseableBinary { excerpt: String },
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("io error reading catalog: {0}")]
    CatalogIo(#[from] std::io::Error),
}

/// Generation prompt styles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationStyle {
    SingleLine,
    Detailed,
    Cot,
    Decomposition,
    DetailedCot,
}

/// What the model is asked to emit per diagnosis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationTarget {
    CodeOnly,
    DescOnly,
    CodeThenDesc,
    DescThenCode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationPromptSpec {
    pub style: GenerationStyle,
    pub target: GenerationTarget,
}

impl GenerationPromptSpec {
    pub fn new(style: GenerationStyle, target: GenerationTarget) -> Result<Self, PromptError> {
        let spec = GenerationPromptSpec { style, target };
        spec.validate()?;
        Ok(spec)
    }

    /// The single-line template asks for codes only, by construction.
    pub fn validate(&self) -> Result<(), PromptError> {
        if self.style == GenerationStyle::SingleLine && self.target != GenerationTarget::CodeOnly {
            return Err(PromptError::SingleLineTarget);
        }
        Ok(())
    }

    pub fn single_line() -> Self {
        GenerationPromptSpec {
            style: GenerationStyle::SingleLine,
            target: GenerationTarget::CodeOnly,
        }
    }
}

/// The four multiple-choice presentation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevisionVariant {
    CodeOnly,
    CodeDesc,
    DescOnly,
    Cot,
}

impl RevisionVariant {
    pub const ALL: [RevisionVariant; 4] = [
        RevisionVariant::CodeOnly,
        RevisionVariant::CodeDesc,
        RevisionVariant::DescOnly,
        RevisionVariant::Cot,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            RevisionVariant::CodeOnly => "Code Only",
            RevisionVariant::CodeDesc => "Code + Description",
            RevisionVariant::DescOnly => "Description Only",
            RevisionVariant::Cot => "Chain-of-Thought (CoT)",
        }
    }
}

/// Candidate presentation order. Sorted is the default; the seeded
/// shuffle exists for option-ordering bias experiments and is fully
/// deterministic given the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionOrdering {
    Sorted,
    SeededShuffle(u64),
}

impl Default for OptionOrdering {
    fn default() -> Self {
        OptionOrdering::Sorted
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionPromptSpec {
    pub variant: RevisionVariant,
    #[serde(default)]
    pub ordering: OptionOrdering,
}

impl RevisionPromptSpec {
    pub fn sorted(variant: RevisionVariant) -> Self {
        RevisionPromptSpec {
            variant,
            ordering: OptionOrdering::Sorted,
        }
    }
}

/// Bijective base-26 option label: A..Z, AA, AB, ...
pub fn option_label(mut index: usize) -> String {
    let mut bytes = Vec::new();
    loop {
        bytes.push(b'A' + (index % 26) as u8);
        if index < 26 {
            break;
        }
        index = index / 26 - 1;
    }
    bytes.reverse();
    String::from_utf8(bytes).expect("labels are ASCII")
}

/// Inverse of [`option_label`]; `None` for anything that is not an
/// uppercase-letter run.
pub fn parse_label(token: &str) -> Option<usize> {
    if token.is_empty() || !token.bytes().all(|b| b.is_ascii_uppercase()) {
        return None;
    }
    let mut value = 0usize;
    for b in token.bytes() {
        value = value.checked_mul(26)?.checked_add((b - b'A') as usize + 1)?;
    }
    Some(value - 1)
}

fn substitute(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in pairs {
        out = out.replace(&format!("${{{key}}}"), value);
    }
    out
}

/// Render a generation prompt for one note.
pub fn build_generation_prompt(
    catalog: &PromptCatalog,
    note: &str,
    spec: &GenerationPromptSpec,
) -> Result<String, PromptError> {
    if note.is_empty() {
        return Err(PromptError::EmptyNote);
    }
    spec.validate()?;
    if spec.style == GenerationStyle::SingleLine {
        return Ok(substitute(
            catalog.get("generation_single_line")?,
            &[("note", note)],
        ));
    }
    let template = match spec.style {
        GenerationStyle::Detailed => catalog.get("generation_detailed")?,
        GenerationStyle::Cot => catalog.get("generation_cot")?,
        GenerationStyle::Decomposition => catalog.get("generation_decomposition")?,
        GenerationStyle::DetailedCot => catalog.get("generation_detailed_cot")?,
        GenerationStyle::SingleLine => unreachable!("handled above"),
    };
    let format_instructions = match spec.target {
        GenerationTarget::CodeOnly => catalog.get("format_code_only")?,
        GenerationTarget::DescOnly => catalog.get("format_desc_only")?,
        GenerationTarget::CodeThenDesc => catalog.get("format_code_then_desc")?,
        GenerationTarget::DescThenCode => catalog.get("format_desc_then_code")?,
    };
    Ok(substitute(
        template,
        &[
            ("format_instructions", format_instructions.trim_end()),
            ("note", note),
        ],
    ))
}

/// The candidate codes of a revision prompt in presentation order.
pub fn ordered_candidates(cands: &CandidateSet, ordering: OptionOrdering) -> Vec<CodeId> {
    let mut codes: Vec<CodeId> = cands.codes().cloned().collect();
    if let OptionOrdering::SeededShuffle(seed) = ordering {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        codes.shuffle(&mut rng);
    }
    codes
}

fn option_line(
    tree: &TabularTree,
    code: &CodeId,
    index: usize,
    variant: RevisionVariant,
) -> Result<String, PromptError> {
    let label = option_label(index);
    let description = || -> Result<String, PromptError> {
        let desc = tree
            .node(code)
            .map(|n| n.description.clone())
            .unwrap_or_default();
        if desc.is_empty() {
            return Err(PromptError::MissingDescription(code.clone()));
        }
        Ok(desc)
    };
    Ok(match variant {
        RevisionVariant::CodeOnly => format!("{label}. {}", code.display_form()),
        RevisionVariant::DescOnly => format!("{label}. {}", description()?),
        RevisionVariant::CodeDesc | RevisionVariant::Cot => {
            format!("{label}. {}: {}", code.display_form(), description()?)
        }
    })
}

/// Render a multiple-choice revision prompt. Returns the prompt together
/// with the candidates in presentation order (index i answers label i).
pub fn build_revision_prompt(
    catalog: &PromptCatalog,
    note: &str,
    cands: &CandidateSet,
    tree: &TabularTree,
    spec: &RevisionPromptSpec,
) -> Result<(String, Vec<CodeId>), PromptError> {
    if note.is_empty() {
        return Err(PromptError::EmptyNote);
    }
    if cands.is_empty() {
        return Err(PromptError::EmptyCandidates);
    }
    let ordered = ordered_candidates(cands, spec.ordering);
    let mut options = String::new();
    for (i, code) in ordered.iter().enumerate() {
        if i > 0 {
            options.push('\n');
        }
        options.push_str(&option_line(tree, code, i, spec.variant)?);
    }
    let template = match spec.variant {
        RevisionVariant::CodeOnly => catalog.get("revision_code_only")?,
        RevisionVariant::CodeDesc => catalog.get("revision_code_desc")?,
        RevisionVariant::DescOnly => catalog.get("revision_desc_only")?,
        RevisionVariant::Cot => catalog.get("revision_cot")?,
    };
    let prompt = substitute(template, &[("note", note), ("options", &options)]);
    Ok((prompt, ordered))
}

/// Render the per-candidate yes/no verification prompt.
pub fn build_binary_verification_prompt(
    catalog: &PromptCatalog,
    note: &str,
    code: &CodeId,
    description: &str,
) -> Result<String, PromptError> {
    if note.is_empty() {
        return Err(PromptError::EmptyNote);
    }
    Ok(substitute(
        catalog.get("binary_verification")?,
        &[
            ("note", note),
            ("code", &code.display_form()),
            ("description", description),
        ],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::{expand, ExpansionConfig};
    use crate::icd_graph::{parse_tabular_tsv, IndexGraph};

    fn code(s: &str) -> CodeId {
        CodeId::new(s).unwrap()
    }

    fn knee_tree() -> TabularTree {
        parse_tabular_tsv(
            "M25\t\tOther joint disorder, not elsewhere classified\tcategory\n\
             M255\tM25\tPain in joint\tsubcategory\n\
             M2556\tM255\tPain in knee\tsubcategory\n\
             M25561\tM2556\tPain in right knee\tsubcategory\n\
             M25562\tM2556\tPain in left knee\tsubcategory\n"
                .as_bytes(),
        )
        .unwrap()
    }

    #[test]
    fn single_line_prompt_is_frozen_byte_for_byte() {
        let catalog = PromptCatalog::builtin();
        let prompt =
            build_generation_prompt(&catalog, "Knee pain.", &GenerationPromptSpec::single_line())
                .unwrap();
        let expected = concat!(
            "You are a professional ICD-10-CM coder.\n",
            "\n",
            "Present your findings in a structured\n",
            "JSON format as follows:\n",
            "{\n",
            "  \"1\": {\n",
            "    \"code\": \"X00.0\"\n",
            "  },\n",
            "  \"2\": {\n",
            "    \"code\": \"Y00.0\"\n",
            "  },\n",
            "  ...\n",
            "}\n",
            "\n",
            "Important: The \"code\" field should \n",
            "contain only the ICD-10 code itself \n",
            "(e.g., \"F32.9\", \"I10\"), without any \n",
            "descriptions or additional text.\n",
            "\n",
            "Here is the note:\n",
            "Knee pain.\n",
        );
        assert_eq!(prompt, expected);
    }

    #[test]
    fn single_line_starts_with_coder_line() {
        let catalog = PromptCatalog::builtin();
        let prompt =
            build_generation_prompt(&catalog, "note", &GenerationPromptSpec::single_line())
                .unwrap();
        assert!(prompt.starts_with("You are a professional ICD-10-CM coder."));
    }

    #[test]
    fn generation_is_deterministic() {
        let catalog = PromptCatalog::builtin();
        let spec = GenerationPromptSpec::new(GenerationStyle::Detailed, GenerationTarget::CodeThenDesc)
            .unwrap();
        let a = build_generation_prompt(&catalog, "note text", &spec).unwrap();
        let b = build_generation_prompt(&catalog, "note text", &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn detailed_prompt_contains_all_meat_tokens() {
        let catalog = PromptCatalog::builtin();
        for style in [GenerationStyle::Detailed, GenerationStyle::DetailedCot] {
            let spec = GenerationPromptSpec::new(style, GenerationTarget::CodeOnly).unwrap();
            let prompt = build_generation_prompt(&catalog, "note", &spec).unwrap();
            for token in ["Monitor", "Evaluate", "Assess", "Treat"] {
                assert!(prompt.contains(token), "{style:?} missing {token}");
            }
        }
    }

    #[test]
    fn decomposition_asks_for_key_phrases_before_codes() {
        let catalog = PromptCatalog::builtin();
        let spec =
            GenerationPromptSpec::new(GenerationStyle::Decomposition, GenerationTarget::CodeOnly)
                .unwrap();
        let prompt = build_generation_prompt(&catalog, "note", &spec).unwrap();
        let phrases = prompt.find("key clinical phrases").unwrap();
        let codes = prompt.find("Codes:").unwrap();
        assert!(phrases < codes);
    }

    #[test]
    fn single_line_rejects_other_targets() {
        assert!(matches!(
            GenerationPromptSpec::new(GenerationStyle::SingleLine, GenerationTarget::DescOnly),
            Err(PromptError::SingleLineTarget)
        ));
    }

    #[test]
    fn empty_note_is_rejected() {
        let catalog = PromptCatalog::builtin();
        assert!(matches!(
            build_generation_prompt(&catalog, "", &GenerationPromptSpec::single_line()),
            Err(PromptError::EmptyNote)
        ));
    }

    fn knee_candidates() -> CandidateSet {
        let tree = knee_tree();
        expand(
            &tree,
            &IndexGraph::new(),
            &code("M25561"),
            &ExpansionConfig::siblings_only(),
        )
        .unwrap()
    }

    #[test]
    fn desc_only_options_show_descriptions_without_codes() {
        let catalog = PromptCatalog::builtin();
        let tree = knee_tree();
        let (prompt, ordered) = build_revision_prompt(
            &catalog,
            "Patient reports pain in left knee.",
            &knee_candidates(),
            &tree,
            &RevisionPromptSpec::sorted(RevisionVariant::DescOnly),
        )
        .unwrap();
        assert!(prompt.contains("Pain in right knee"));
        assert!(prompt.contains("Pain in left knee"));
        assert!(!prompt.contains("M25.561"));
        assert_eq!(ordered, vec![code("M25561"), code("M25562")]);
    }

    #[test]
    fn code_desc_options_show_both() {
        let catalog = PromptCatalog::builtin();
        let tree = knee_tree();
        let (prompt, _) = build_revision_prompt(
            &catalog,
            "note",
            &knee_candidates(),
            &tree,
            &RevisionPromptSpec::sorted(RevisionVariant::CodeDesc),
        )
        .unwrap();
        assert!(prompt.contains("A. M25.561: Pain in right knee"));
        assert!(prompt.contains("B. M25.562: Pain in left knee"));
    }

    #[test]
    fn cot_revision_appends_answer_directive() {
        let catalog = PromptCatalog::builtin();
        let tree = knee_tree();
        let (prompt, _) = build_revision_prompt(
            &catalog,
            "note",
            &knee_candidates(),
            &tree,
            &RevisionPromptSpec::sorted(RevisionVariant::Cot),
        )
        .unwrap();
        assert!(prompt.contains("step by step"));
        assert!(prompt.contains("Answer: <letter>"));
    }

    #[test]
    fn single_candidate_gets_option_a() {
        let catalog = PromptCatalog::builtin();
        let tree = knee_tree();
        let cands = CandidateSet {
            seed: code("M25561"),
            candidates: vec![crate::expansion::Candidate {
                code: code("M25561"),
                why: Default::default(),
            }],
        };
        let (prompt, ordered) = build_revision_prompt(
            &catalog,
            "note",
            &cands,
            &tree,
            &RevisionPromptSpec::sorted(RevisionVariant::CodeOnly),
        )
        .unwrap();
        assert!(prompt.contains("A. M25.561"));
        assert!(!prompt.contains("\nB. "));
        assert_eq!(ordered.len(), 1);
    }

    #[test]
    fn thirty_candidates_labelled_a_through_ad() {
        assert_eq!(option_label(0), "A");
        assert_eq!(option_label(25), "Z");
        assert_eq!(option_label(26), "AA");
        assert_eq!(option_label(29), "AD");
        for i in 0..200 {
            assert_eq!(parse_label(&option_label(i)), Some(i));
        }
    }

    #[test]
    fn seeded_shuffle_is_deterministic_per_seed() {
        let cands = knee_candidates();
        let a = ordered_candidates(&cands, OptionOrdering::SeededShuffle(42));
        let b = ordered_candidates(&cands, OptionOrdering::SeededShuffle(42));
        assert_eq!(a, b);
        let sorted = ordered_candidates(&cands, OptionOrdering::Sorted);
        assert_eq!(sorted, vec![code("M25561"), code("M25562")]);
    }

    #[test]
    fn missing_description_names_the_code() {
        let catalog = PromptCatalog::builtin();
        let tree = parse_tabular_tsv("M25\t\t\tcategory\n".as_bytes()).unwrap();
        let cands = CandidateSet {
            seed: code("M25"),
            candidates: vec![crate::expansion::Candidate {
                code: code("M25"),
                why: Default::default(),
            }],
        };
        let err = build_revision_prompt(
            &catalog,
            "note",
            &cands,
            &tree,
            &RevisionPromptSpec::sorted(RevisionVariant::DescOnly),
        )
        .unwrap_err();
        assert!(matches!(err, PromptError::MissingDescription(c) if c == code("M25")));
    }

    #[test]
    fn binary_prompt_has_exactly_one_question() {
        let catalog = PromptCatalog::builtin();
        let prompt = build_binary_verification_prompt(
            &catalog,
            "Blood workup shows abnormal lead levels.",
            &code("R78.71"),
            "Abnormal lead level in blood",
        )
        .unwrap();
        assert_eq!(prompt.matches('?').count(), 1);
        assert!(prompt.contains("R78.71"));
        assert!(prompt.contains("Abnormal lead level in blood"));
        assert!(prompt.to_lowercase().contains("yes or no"));
        let again = build_binary_verification_prompt(
            &catalog,
            "Blood workup shows abnormal lead levels.",
            &code("R78.71"),
            "Abnormal lead level in blood",
        )
        .unwrap();
        assert_eq!(prompt, again);
    }
}
