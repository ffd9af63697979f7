//! Conclusion labels shared by cases, flows, and judgments.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Seed polarity of a norm, and the effect of a norm predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Permit,
    Forbid,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Permit => "Permit",
            Polarity::Forbid => "Forbid",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether the statute governs a case at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Applicability {
    Applicable,
    #[serde(rename = "Not Applicable")]
    NotApplicable,
}

impl Applicability {
    pub fn as_str(self) -> &'static str {
        match self {
            Applicability::Applicable => "Applicable",
            Applicability::NotApplicable => "Not Applicable",
        }
    }
}

/// Outcome of checking a flow against one norm or against the whole statute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    Permit,
    Forbid,
    #[serde(rename = "Not Applicable")]
    NotApplicable,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Permit => "Permit",
            Verdict::Forbid => "Forbid",
            Verdict::NotApplicable => "Not Applicable",
        }
    }

    pub fn polarity(self) -> Option<Polarity> {
        match self {
            Verdict::Permit => Some(Polarity::Permit),
            Verdict::Forbid => Some(Polarity::Forbid),
            Verdict::NotApplicable => None,
        }
    }

    /// Scans `text` for the earliest verdict label, case-insensitively.
    pub fn find_first(text: &str) -> Option<Verdict> {
        let lower = text.to_lowercase();
        [
            ("not applicable", Verdict::NotApplicable),
            ("permit", Verdict::Permit),
            ("forbid", Verdict::Forbid),
        ]
        .into_iter()
        .filter_map(|(needle, v)| lower.find(needle).map(|pos| (pos, v)))
        .min_by_key(|(pos, _)| *pos)
        .map(|(_, v)| v)
    }
}

impl From<Polarity> for Verdict {
    fn from(p: Polarity) -> Self {
        match p {
            Polarity::Permit => Verdict::Permit,
            Polarity::Forbid => Verdict::Forbid,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn earliest_label_wins() {
        assert_eq!(Verdict::find_first("Not Applicable; would otherwise permit"), Some(Verdict::NotApplicable));
        assert_eq!(Verdict::find_first("Forbid. It does not permit"), Some(Verdict::Forbid));
        assert_eq!(Verdict::find_first("unclear"), None);
    }

    #[test]
    fn serializes_with_spaces() {
        assert_eq!(serde_json::to_string(&Verdict::NotApplicable).unwrap(), "\"Not Applicable\"");
        assert_eq!(serde_json::to_string(&Applicability::NotApplicable).unwrap(), "\"Not Applicable\"");
    }
}
