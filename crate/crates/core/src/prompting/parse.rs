//! Parsers for noisy model output: structured-JSON code lists, multiple
//! choice labels, and yes/no answers.

use serde_json::Value;

use super::{parse_label, PromptError};
use crate::icd_graph::CodeId;

/// One extracted prediction. At least one of the fields is present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationEntry {
    pub code: Option<CodeId>,
    pub description: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedGeneration {
    pub entries: Vec<GenerationEntry>,
    pub warnings: Vec<String>,
}

impl ParsedGeneration {
    pub fn codes(&self) -> Vec<CodeId> {
        self.entries.iter().filter_map(|e| e.code.clone()).collect()
    }
}

/// Find the first complete JSON object or array in free text, tolerating
/// markdown code fences and surrounding prose.
pub fn extract_first_json(text: &str) -> Option<Value> {
    let trimmed = text.trim();
    if let Ok(v) = serde_json::from_str::<Value>(trimmed) {
        if v.is_object() || v.is_array() {
            return Some(v);
        }
    }
    if let Some(inner) = extract_code_fence(trimmed) {
        if let Ok(v) = serde_json::from_str::<Value>(inner.trim()) {
            if v.is_object() || v.is_array() {
                return Some(v);
            }
        }
    }
    let candidate = extract_balanced(trimmed)?;
    serde_json::from_str::<Value>(candidate).ok()
}

fn extract_code_fence(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    // Skip an optional language tag line ("json").
    let content_start = after.find('\n').map(|i| i + 1)?;
    let body = &after[content_start..];
    let end = body.find("```")?;
    Some(&body[..end])
}

/// First balanced `{...}` or `[...]` region, string-aware.
fn extract_balanced(text: &str) -> Option<&str> {
    let start = text.find(['{', '['])?;
    let bytes = text.as_bytes();
    let mut stack: Vec<u8> = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for (offset, &b) in bytes[start..].iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => stack.push(b'}'),
            b'[' => stack.push(b']'),
            b'}' | b']' => {
                if stack.last() == Some(&b) {
                    stack.pop();
                    if stack.is_empty() {
                        return Some(&text[start..start + offset + 1]);
                    }
                } else {
                    return None;
                }
            }
            _ => {}
        }
    }
    None
}

fn entry_from_value(value: &Value, warnings: &mut Vec<String>) -> Option<GenerationEntry> {
    let (raw_code, description) = match value {
        Value::String(s) => (Some(s.clone()), None),
        Value::Object(map) => {
            let code = map.get("code").and_then(Value::as_str).map(str::to_string);
            let desc = map
                .get("description")
                .or_else(|| map.get("desc"))
                .and_then(Value::as_str)
                .map(str::to_string);
            (code, desc)
        }
        _ => return None,
    };
    let code = match raw_code {
        Some(raw) => match CodeId::new(&raw) {
            Ok(c) => Some(c),
            Err(e) => {
                warnings.push(format!("dropped unparseable code: {e}"));
                None
            }
        },
        None => None,
    };
    let description = description.filter(|d| !d.trim().is_empty());
    if code.is_none() && description.is_none() {
        return None;
    }
    Some(GenerationEntry { code, description })
}

/// Strict code shape for free-text scanning: letter, digit, alphanumeric,
/// optional dot, then up to four alphanumerics. Narrower than the
/// canonical id pattern on purpose, so ordinary capitalized words are
/// never mistaken for codes.
fn looks_like_code(token: &str) -> bool {
    let cleaned: String = token
        .trim_matches(|c: char| !c.is_ascii_alphanumeric())
        .chars()
        .filter(|c| *c != '.')
        .collect();
    let bytes = cleaned.as_bytes();
    if !(3..=7).contains(&bytes.len()) {
        return false;
    }
    bytes[0].is_ascii_uppercase()
        && bytes[1].is_ascii_digit()
        && bytes[2..].iter().all(|b| b.is_ascii_alphanumeric())
}

fn code_token(token: &str) -> Option<CodeId> {
    let cleaned = token.trim_matches(|c: char| !c.is_ascii_alphanumeric() && c != '.');
    if looks_like_code(cleaned) {
        CodeId::new(cleaned).ok()
    } else {
        None
    }
}

fn parse_lines(text: &str, out: &mut ParsedGeneration) {
    for line in text.lines() {
        let line = line
            .trim()
            .trim_start_matches(|c: char| c.is_ascii_digit() || c == '.' || c == ')' || c == '-')
            .trim();
        if line.is_empty() {
            continue;
        }
        // "CODE - description" / "description - CODE" style rows.
        let mut matched = false;
        for separator in [" - ", ": ", " \u{2014} ", "\t"] {
            if let Some((left, right)) = line.split_once(separator) {
                if let Some(code) = code_token(left.trim()) {
                    out.entries.push(GenerationEntry {
                        code: Some(code),
                        description: non_empty(right),
                    });
                    matched = true;
                    break;
                }
                if let Some(code) = code_token(right.trim()) {
                    out.entries.push(GenerationEntry {
                        code: Some(code),
                        description: non_empty(left),
                    });
                    matched = true;
                    break;
                }
            }
        }
        if matched {
            continue;
        }
        // A bare code on its own line, or code-shaped tokens inside prose.
        for token in line.split_whitespace() {
            if let Some(code) = code_token(token) {
                out.entries.push(GenerationEntry {
                    code: Some(code),
                    description: None,
                });
            }
        }
    }
}

fn non_empty(s: &str) -> Option<String> {
    let t = s.trim();
    (!t.is_empty()).then(|| t.to_string())
}

/// Parse a generation response into ordered entries.
///
/// JSON first: the numbered-keys object shape (keys read in numeric
/// order), a plain array of entries, or a single `{"code": ...}` object.
/// When no JSON can be found, falls back to line-oriented extraction.
/// Never fails: unusable input yields empty entries plus a warning.
pub fn parse_generation_response(text: &str) -> ParsedGeneration {
    let mut out = ParsedGeneration::default();
    if let Some(json) = extract_first_json(text) {
        match &json {
            Value::Object(map) => {
                let mut numbered: Vec<(u64, &Value)> = map
                    .iter()
                    .filter_map(|(k, v)| k.trim().parse::<u64>().ok().map(|n| (n, v)))
                    .collect();
                if numbered.is_empty() {
                    if let Some(entry) = entry_from_value(&json, &mut out.warnings) {
                        out.entries.push(entry);
                    }
                    // Tolerate {"codes": ["I10", ...]} shapes.
                    if let Some(Value::Array(items)) = map.get("codes") {
                        for item in items {
                            if let Some(entry) = entry_from_value(item, &mut out.warnings) {
                                out.entries.push(entry);
                            }
                        }
                    }
                } else {
                    numbered.sort_by_key(|(n, _)| *n);
                    for (_, value) in numbered {
                        if let Some(entry) = entry_from_value(value, &mut out.warnings) {
                            out.entries.push(entry);
                        }
                    }
                }
            }
            Value::Array(items) => {
                for item in items {
                    if let Some(entry) = entry_from_value(item, &mut out.warnings) {
                        out.entries.push(entry);
                    }
                }
            }
            _ => {}
        }
    }
    if out.entries.is_empty() {
        parse_lines(text, &mut out);
    }
    if out.entries.is_empty() {
        out.warnings
            .push("no codes or descriptions could be extracted".to_string());
    }
    out
}

/// Render codes into the numbered-keys JSON shape the single-line prompt
/// asks for. Codes are printed in display form.
pub fn render_generation_json(codes: &[CodeId]) -> String {
    let mut map = serde_json::Map::new();
    for (i, code) in codes.iter().enumerate() {
        let mut entry = serde_json::Map::new();
        entry.insert("code".to_string(), Value::String(code.display_form()));
        map.insert((i + 1).to_string(), Value::Object(entry));
    }
    serde_json::to_string_pretty(&Value::Object(map)).expect("string maps serialize cleanly")
}

fn scan_for_label(segment: &str, option_count: usize) -> Option<usize> {
    let bytes = segment.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_uppercase() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_uppercase() {
                i += 1;
            }
            let boundary_before = start == 0 || !bytes[start - 1].is_ascii_alphanumeric();
            let boundary_after = i >= bytes.len() || !bytes[i].is_ascii_alphanumeric();
            if boundary_before && boundary_after && i - start <= 3 {
                if let Some(index) = parse_label(&segment[start..i]) {
                    if index < option_count {
                        return Some(index);
                    }
                }
            }
        } else {
            i += 1;
        }
    }
    None
}

fn after_last_marker<'a>(text: &'a str, marker: &str) -> Option<&'a str> {
    let needle = marker.as_bytes();
    let haystack = text.as_bytes();
    let pos = haystack
        .windows(needle.len())
        .rposition(|w| w.eq_ignore_ascii_case(needle))?;
    Some(&text[pos + needle.len()..])
}

/// Extract the chosen option index from a multiple-choice response.
///
/// The first standalone in-range label wins; when the response contains
/// an "answer" marker (chain-of-thought responses), the text after its
/// last occurrence is scanned first.
pub fn parse_choice_response(text: &str, option_count: usize) -> Result<usize, PromptError> {
    if option_count >= 1 {
        if let Some(tail) = after_last_marker(text, "answer") {
            if let Some(index) = scan_for_label(tail, option_count) {
                return Ok(index);
            }
        }
        if let Some(index) = scan_for_label(text, option_count) {
            return Ok(index);
        }
    }
    Err(PromptError::UnparseableChoice {
        excerpt: excerpt(text),
    })
}

/// Extract a yes/no decision. Scans after the last "answer" marker first,
/// then the whole text; first standalone yes/no wins.
pub fn parse_binary_response(text: &str) -> Result<bool, PromptError> {
    fn scan(segment: &str) -> Option<bool> {
        let lower = segment.to_lowercase();
        let bytes = lower.as_bytes();
        let mut best: Option<(usize, bool)> = None;
        for (word, value) in [("yes", true), ("no", false)] {
            let mut offset = 0;
            while let Some(pos) = lower[offset..].find(word) {
                let at = offset + pos;
                let before_ok = at == 0 || !bytes[at - 1].is_ascii_alphanumeric();
                let end = at + word.len();
                let after_ok = end >= bytes.len() || !bytes[end].is_ascii_alphanumeric();
                if before_ok && after_ok {
                    if best.map(|(b, _)| at < b).unwrap_or(true) {
                        best = Some((at, value));
                    }
                    break;
                }
                offset = at + word.len();
            }
        }
        best.map(|(_, v)| v)
    }
    if let Some(tail) = after_last_marker(text, "answer") {
        if let Some(v) = scan(tail) {
            return Ok(v);
        }
    }
    scan(text).ok_or_else(|| PromptError::UnparseableBinary {
        excerpt: excerpt(text),
    })
}

fn excerpt(text: &str) -> String {
    text.chars().take(80).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn codes(parsed: &ParsedGeneration) -> Vec<&str> {
        parsed
            .entries
            .iter()
            .filter_map(|e| e.code.as_ref().map(|c| c.as_str()))
            .collect()
    }

    #[test]
    fn numbered_json_reads_keys_in_numeric_order() {
        let parsed = parse_generation_response(
            r#"{"2":{"code":"I10"},"1":{"code":"F32.9"},"10":{"code":"E11.9"}}"#,
        );
        assert_eq!(codes(&parsed), vec!["F329", "I10", "E119"]);
        assert!(parsed.warnings.is_empty());
    }

    #[test]
    fn fenced_json_parses_identically() {
        let bare = parse_generation_response(r#"{"1":{"code":"F32.9"},"2":{"code":"I10"}}"#);
        let fenced = parse_generation_response(
            "```json\n{\"1\":{\"code\":\"F32.9\"},\"2\":{\"code\":\"I10\"}}\n```",
        );
        assert_eq!(bare.entries, fenced.entries);
    }

    #[test]
    fn leading_prose_is_tolerated() {
        let parsed = parse_generation_response(
            "Sure! Here are the codes:\n{\"1\": {\"code\": \"I10\"}}\nHope that helps.",
        );
        assert_eq!(codes(&parsed), vec!["I10"]);
    }

    #[test]
    fn unparseable_code_becomes_warning() {
        let parsed =
            parse_generation_response(r#"{"1":{"code":"not a code"},"2":{"code":"I10"}}"#);
        assert_eq!(codes(&parsed), vec!["I10"]);
        assert_eq!(parsed.warnings.len(), 1);
    }

    #[test]
    fn description_only_entries_survive() {
        let parsed = parse_generation_response(
            r#"{"1":{"description":"Essential hypertension"},"2":{"code":"I10"}}"#,
        );
        assert_eq!(parsed.entries.len(), 2);
        assert_eq!(
            parsed.entries[0].description.as_deref(),
            Some("Essential hypertension")
        );
        assert!(parsed.entries[0].code.is_none());
    }

    #[test]
    fn garbage_yields_empty_with_warning() {
        let parsed = parse_generation_response("I cannot help with that request.");
        assert!(parsed.entries.is_empty());
        assert!(!parsed.warnings.is_empty());
    }

    #[test]
    fn line_fallback_code_dash_description() {
        let parsed = parse_generation_response("1. I10 - Essential hypertension\n2. F32.9 - Depression");
        assert_eq!(codes(&parsed), vec!["I10", "F329"]);
        assert_eq!(
            parsed.entries[0].description.as_deref(),
            Some("Essential hypertension")
        );
    }

    #[test]
    fn line_fallback_description_dash_code() {
        let parsed = parse_generation_response("Essential hypertension - I10");
        assert_eq!(codes(&parsed), vec!["I10"]);
        assert_eq!(
            parsed.entries[0].description.as_deref(),
            Some("Essential hypertension")
        );
    }

    #[test]
    fn capitalized_words_are_not_codes() {
        let parsed = parse_generation_response("MEAT - The documentation principle");
        assert!(parsed.entries.is_empty());
    }

    #[test]
    fn render_then_parse_recovers_codes() {
        let ids: Vec<CodeId> = ["I110", "F329", "M25561"]
            .iter()
            .map(|c| CodeId::new(c).unwrap())
            .collect();
        let rendered = render_generation_json(&ids);
        let parsed = parse_generation_response(&rendered);
        assert_eq!(parsed.codes(), ids);
    }

    #[test]
    fn choice_bare_label() {
        assert_eq!(parse_choice_response("B", 3).unwrap(), 1);
        assert_eq!(parse_choice_response("  C.  ", 3).unwrap(), 2);
        assert_eq!(parse_choice_response("(A)", 3).unwrap(), 0);
        assert_eq!(parse_choice_response("**B**", 3).unwrap(), 1);
    }

    #[test]
    fn choice_after_answer_marker() {
        let text = "Option A mentions the right knee but the note says left.\n\
                    Therefore the answer is C.";
        assert_eq!(parse_choice_response(text, 4).unwrap(), 2);
        assert_eq!(
            parse_choice_response("Answer: AD", 30).unwrap(),
            29
        );
    }

    #[test]
    fn choice_out_of_range_is_error() {
        assert!(matches!(
            parse_choice_response("Z", 3),
            Err(PromptError::UnparseableChoice { .. })
        ));
    }

    #[test]
    fn choice_empty_and_zero_options() {
        assert!(parse_choice_response("", 3).is_err());
        assert!(parse_choice_response("A", 0).is_err());
    }

    #[test]
    fn binary_parses_yes_no() {
        assert!(parse_binary_response("Yes").unwrap());
        assert!(!parse_binary_response("no.").unwrap());
        assert!(!parse_binary_response("The answer is no").unwrap());
        assert!(parse_binary_response(
            "The note mentions no history of lead exposure... Answer: yes"
        )
        .unwrap());
        assert!(parse_binary_response("maybe").is_err());
    }
}
