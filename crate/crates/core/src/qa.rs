//! Splitting numbered-question answers (`Q1: ...`, `Q2. ...`) out of model text,
//! and reading the eleven contextual-integrity features from `Key: value` lists.

use std::collections::BTreeMap;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

static QUESTION_MARK: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?im)^[ \t>*#_\-]*(?:\*\*)?Q(\d{1,2})\b(?:\s*\([^)\n]*\))?[ \t*]*[:.)\-]?(?:\*\*)?[ \t]*").unwrap()
});

/// Answers keyed by question number. Text before the first marker is dropped;
/// a repeated number keeps its first answer.
pub fn split_questions(text: &str) -> BTreeMap<u32, String> {
    let marks: Vec<(u32, usize, usize)> = QUESTION_MARK
        .captures_iter(text)
        .filter_map(|c| {
            let m = c.get(0)?;
            Some((c[1].parse().ok()?, m.start(), m.end()))
        })
        .collect();
    let mut out = BTreeMap::new();
    for (i, &(q, _, body_start)) in marks.iter().enumerate() {
        let end = marks.get(i + 1).map(|m| m.1).unwrap_or(text.len());
        out.entry(q).or_insert_with(|| text[body_start..end].trim().to_string());
    }
    out
}

/// True for answers that say nothing: empty, `None`, `N/A`, and the like.
pub fn is_sentinel(value: &str) -> bool {
    let v = value.trim().trim_matches(|c: char| c == '.' || c == '"' || c == '\'' || c == '*').trim();
    if v.is_empty() {
        return true;
    }
    let lower = v.to_lowercase();
    let first = lower.split(|c: char| !c.is_alphanumeric() && c != '/').next().unwrap_or("");
    matches!(first, "none" | "n/a" | "na") || lower == "not applicable" || lower == "not mentioned"
}

/// The eleven contextual-integrity features of one information flow as
/// extracted from text. Absent means not found or marked `None`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowFeatures {
    pub sender: Option<String>,
    pub sender_role: Option<String>,
    pub recipient: Option<String>,
    pub recipient_role: Option<String>,
    pub subject: Option<String>,
    pub subject_role: Option<String>,
    #[serde(rename = "type")]
    pub info_type: Option<String>,
    pub purpose: Option<String>,
    pub in_reply_to: Option<String>,
    pub consented_by: Option<String>,
    pub belief: Option<String>,
}

/// Display names in the order the prompts list them.
pub const FEATURE_NAMES: [&str; 11] = [
    "Sender",
    "Sender Role",
    "Recipient",
    "Recipient Role",
    "Subject",
    "Subject Role",
    "Type",
    "Purpose",
    "In Reply To",
    "Consented By",
    "Belief",
];

static FEATURE_KEY: Lazy<Regex> = Lazy::new(|| {
    Regex::new(
        r"(?i)\b(sender\s+role|sender|recipient\s+role|recipient|subject\s+role|subject|information\s+type|type|purpose|in\s+reply\s+to|consented\s+by|belief)\s*\**\s*:",
    )
    .unwrap()
});

impl FlowFeatures {
    /// Reads `Key: value` pairs; a value runs until the next key.
    pub fn parse(text: &str) -> FlowFeatures {
        let keys: Vec<(usize, usize, String)> = FEATURE_KEY
            .captures_iter(text)
            .map(|c| {
                let m = c.get(0).unwrap();
                let name = c[1].split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
                (m.start(), m.end(), name)
            })
            .collect();
        let mut out = FlowFeatures::default();
        for (i, (_, value_start, name)) in keys.iter().enumerate() {
            let end = keys.get(i + 1).map(|k| k.0).unwrap_or(text.len());
            let raw = clean_value(&text[*value_start..end]);
            let value = if is_sentinel(&raw) { None } else { Some(raw) };
            let slot = match name.as_str() {
                "sender" => &mut out.sender,
                "sender role" => &mut out.sender_role,
                "recipient" => &mut out.recipient,
                "recipient role" => &mut out.recipient_role,
                "subject" => &mut out.subject,
                "subject role" => &mut out.subject_role,
                "type" | "information type" => &mut out.info_type,
                "purpose" => &mut out.purpose,
                "in reply to" => &mut out.in_reply_to,
                "consented by" => &mut out.consented_by,
                "belief" => &mut out.belief,
                _ => continue,
            };
            if slot.is_none() {
                *slot = value;
            }
        }
        out
    }

    /// `(display name, value)` in prompt order.
    pub fn fields(&self) -> [(&'static str, Option<&str>); 11] {
        [
            (FEATURE_NAMES[0], self.sender.as_deref()),
            (FEATURE_NAMES[1], self.sender_role.as_deref()),
            (FEATURE_NAMES[2], self.recipient.as_deref()),
            (FEATURE_NAMES[3], self.recipient_role.as_deref()),
            (FEATURE_NAMES[4], self.subject.as_deref()),
            (FEATURE_NAMES[5], self.subject_role.as_deref()),
            (FEATURE_NAMES[6], self.info_type.as_deref()),
            (FEATURE_NAMES[7], self.purpose.as_deref()),
            (FEATURE_NAMES[8], self.in_reply_to.as_deref()),
            (FEATURE_NAMES[9], self.consented_by.as_deref()),
            (FEATURE_NAMES[10], self.belief.as_deref()),
        ]
    }

    /// The seven mandatory features, all present and not sentinels.
    pub fn has_vital_features(&self) -> bool {
        self.fields()[..7].iter().all(|(_, v)| v.map(|v| !is_sentinel(v)).unwrap_or(false))
    }

    /// `Sender: X, Sender Role: Y, ...` over the first `count` features,
    /// with absent ones rendered as `None`.
    pub fn render(&self, count: usize) -> String {
        self.fields()[..count]
            .iter()
            .map(|(k, v)| format!("{k}: {}", v.unwrap_or("None")))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

fn clean_value(raw: &str) -> String {
    let collapsed = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_matches(|c: char| c == ',' || c == ';' || c == '*' || c == '-' || c == '•' || c.is_whitespace())
        .trim_end_matches('.')
        .trim()
        .to_string()
}
