//! Statute section identifiers of the form `part.section(label)*`.

use std::fmt;
use std::str::FromStr;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::IdError;

/// Matches a canonical id somewhere inside free text, with an optional `§` prefix.
pub(crate) static EMBEDDED_ID: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?:^|[^\w.$])(?:§+\s*)?(\d+)\.(\d+)((?:\s*\([A-Za-z0-9]+\))*)").unwrap()
});

static LABEL: Lazy<Regex> = Lazy::new(|| Regex::new(r"\(([A-Za-z0-9]+)\)").unwrap());

/// A section identifier such as `164.502(a)(1)(ii)`.
///
/// Labels are stored lowercase; parsing ignores whitespace and an optional
/// leading `§`, so `§ 164.502 (A)` and `164.502(a)` are the same id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NormId {
    part: u32,
    section: u32,
    labels: Vec<String>,
}

impl NormId {
    pub fn new(part: u32, section: u32, labels: Vec<String>) -> Result<Self, IdError> {
        if part == 0 || section == 0 {
            return Err(IdError::Malformed(format!("{part}.{section}")));
        }
        let mut canonical = Vec::with_capacity(labels.len());
        for label in labels {
            let label = label.trim().to_lowercase();
            if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric()) {
                return Err(IdError::Malformed(format!("label `{label}`")));
            }
            canonical.push(label);
        }
        Ok(Self { part, section, labels: canonical })
    }

    pub fn part(&self) -> u32 {
        self.part
    }

    pub fn section(&self) -> u32 {
        self.section
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// The enclosing id, one label shorter. Bare sections have no parent id.
    pub fn parent(&self) -> Option<NormId> {
        if self.labels.is_empty() {
            return None;
        }
        Some(NormId {
            part: self.part,
            section: self.section,
            labels: self.labels[..self.labels.len() - 1].to_vec(),
        })
    }

    /// The bare `part.section` id this paragraph belongs to.
    pub fn section_id(&self) -> NormId {
        NormId { part: self.part, section: self.section, labels: Vec::new() }
    }

    /// Same section, different paragraph path.
    pub fn with_labels(&self, labels: Vec<String>) -> Result<NormId, IdError> {
        NormId::new(self.part, self.section, labels)
    }

    /// True when `self` equals `other` or encloses it.
    pub fn is_prefix_of(&self, other: &NormId) -> bool {
        self.part == other.part
            && self.section == other.section
            && other.labels.len() >= self.labels.len()
            && other.labels[..self.labels.len()] == self.labels[..]
    }

    /// All ids mentioned in `text`, in order of appearance, without duplicates.
    pub fn find_all(text: &str) -> Vec<NormId> {
        let mut out: Vec<NormId> = Vec::new();
        for caps in EMBEDDED_ID.captures_iter(text) {
            let raw = format!("{}.{}{}", &caps[1], &caps[2], &caps[3]);
            if let Ok(id) = raw.parse::<NormId>() {
                if !out.contains(&id) {
                    out.push(id);
                }
            }
        }
        out
    }

    /// Parses a run of parenthesized labels such as `(a)(5)(ii)`.
    pub fn parse_labels(text: &str) -> Vec<String> {
        LABEL.captures_iter(text).map(|c| c[1].to_lowercase()).collect()
    }
}

impl fmt::Display for NormId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.part, self.section)?;
        for label in &self.labels {
            write!(f, "({label})")?;
        }
        Ok(())
    }
}

impl FromStr for NormId {
    type Err = IdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let body = compact.trim_start_matches('§');
        let malformed = || IdError::Malformed(s.to_string());

        let (head, rest) = match body.find('(') {
            Some(i) => body.split_at(i),
            None => (body, ""),
        };
        let (part, section) = head.split_once('.').ok_or_else(malformed)?;
        if part.is_empty()
            || section.is_empty()
            || !part.bytes().all(|b| b.is_ascii_digit())
            || !section.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(malformed());
        }
        let part: u32 = part.parse().map_err(|_| malformed())?;
        let section: u32 = section.parse().map_err(|_| malformed())?;

        let mut labels = Vec::new();
        let mut tail = rest;
        while !tail.is_empty() {
            let inner = tail.strip_prefix('(').ok_or_else(malformed)?;
            let close = inner.find(')').ok_or_else(malformed)?;
            let label = &inner[..close];
            if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric()) {
                return Err(malformed());
            }
            labels.push(label.to_string());
            tail = &inner[close + 1..];
        }
        NormId::new(part, section, labels).map_err(|_| malformed())
    }
}

impl Serialize for NormId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NormId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}
