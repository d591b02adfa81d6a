//! Canonical code identifiers.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::GraphError;

/// A canonical ICD-10-CM code: uppercase, dot removed, whitespace trimmed.
///
/// `"I11.0"`, `"i11.0"` and `" I110 "` all normalize to `I110`. The
/// canonical pattern is a letter followed by two alphanumerics, then up to
/// four more alphanumerics (3-7 characters total).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct CodeId(String);

impl CodeId {
    /// Normalize a raw code string into its canonical form.
    pub fn new(raw: &str) -> Result<Self, GraphError> {
        let normalized: String = raw
            .trim()
            .chars()
            .filter(|c| *c != '.')
            .map(|c| c.to_ascii_uppercase())
            .collect();
        if !Self::is_canonical(&normalized) {
            return Err(GraphError::InvalidCode { raw: raw.to_string() });
        }
        Ok(CodeId(normalized))
    }

    fn is_canonical(s: &str) -> bool {
        let bytes = s.as_bytes();
        if !(3..=7).contains(&bytes.len()) {
            return false;
        }
        bytes[0].is_ascii_uppercase()
            && bytes[1..]
                .iter()
                .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The dotted display form: a dot after the third character when the
    /// code is longer than three characters (`I110` -> `I11.0`).
    pub fn display_form(&self) -> String {
        if self.0.len() > 3 {
            format!("{}.{}", &self.0[..3], &self.0[3..])
        } else {
            self.0.clone()
        }
    }
}

impl fmt::Display for CodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for CodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CodeId({})", self.0)
    }
}

impl<'de> Deserialize<'de> for CodeId {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let raw = String::deserialize(deserializer)?;
        CodeId::new(&raw).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_dotted_uppercase() {
        assert_eq!(CodeId::new("I11.0").unwrap().as_str(), "I110");
    }

    #[test]
    fn normalizes_lowercase_with_dot() {
        assert_eq!(CodeId::new("m25.561").unwrap().as_str(), "M25561");
    }

    #[test]
    fn rejects_leading_digit() {
        assert!(matches!(
            CodeId::new("11I.0"),
            Err(GraphError::InvalidCode { raw }) if raw == "11I.0"
        ));
    }

    #[test]
    fn rejects_too_short_and_too_long() {
        assert!(CodeId::new("I1").is_err());
        assert!(CodeId::new("I1234567").is_err());
    }

    #[test]
    fn trims_whitespace() {
        assert_eq!(CodeId::new("  F32.9 ").unwrap().as_str(), "F329");
    }

    #[test]
    fn display_round_trip() {
        for raw in ["I110", "I11", "M25561", "S060X0A"] {
            let id = CodeId::new(raw).unwrap();
            let back = CodeId::new(&id.display_form()).unwrap();
            assert_eq!(id, back);
        }
    }

    #[test]
    fn display_form_inserts_dot() {
        assert_eq!(CodeId::new("I110").unwrap().display_form(), "I11.0");
        assert_eq!(CodeId::new("I11").unwrap().display_form(), "I11");
    }
}
