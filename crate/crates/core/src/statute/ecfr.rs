//! Adapter from the federal-regulations full-text XML to [`StatuteSourceDocument`].
//!
//! Sections arrive as flat `<P>` runs whose nesting is only implied by their
//! leading markers: `(a)` → `(1)` → `(i)` → `(A)` → `(1)` → `(i)`. The level
//! of each marker is inferred from what is currently open.

use crate::gateway::HttpTransport;
use crate::LawProfile;

use super::{SourceNode, StatuteSourceDocument};

pub const ECFR_BASE: &str = "https://www.ecfr.gov/api/versioner/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Lower,
    Digit,
    Roman,
    Upper,
}

const LEVEL_KINDS: [Kind; 6] = [Kind::Lower, Kind::Digit, Kind::Roman, Kind::Upper, Kind::Digit, Kind::Roman];

fn roman_value(s: &str) -> Option<u32> {
    if s.is_empty() || !s.chars().all(|c| "ivxlc".contains(c)) {
        return None;
    }
    let val = |c| match c {
        'i' => 1,
        'v' => 5,
        'x' => 10,
        'l' => 50,
        _ => 100,
    };
    let chars: Vec<u32> = s.chars().map(val).collect();
    let mut total = 0i64;
    for (i, &v) in chars.iter().enumerate() {
        if chars.get(i + 1).is_some_and(|&next| next > v) {
            total -= v as i64;
        } else {
            total += v as i64;
        }
    }
    let total = u32::try_from(total).ok()?;
    (to_roman(total) == s).then_some(total)
}

fn to_roman(mut n: u32) -> String {
    const TABLE: [(u32, &str); 9] =
        [(100, "c"), (90, "xc"), (50, "l"), (40, "xl"), (10, "x"), (9, "ix"), (5, "v"), (4, "iv"), (1, "i")];
    let mut out = String::new();
    for (v, s) in TABLE {
        while n >= v {
            out.push_str(s);
            n -= v;
        }
    }
    out
}

fn fits(kind: Kind, label: &str) -> bool {
    match kind {
        Kind::Lower => label.len() == 1 && label.chars().all(|c| c.is_ascii_lowercase()),
        Kind::Upper => label.len() == 1 && label.chars().all(|c| c.is_ascii_uppercase()),
        Kind::Digit => label.chars().all(|c| c.is_ascii_digit()),
        Kind::Roman => roman_value(label).is_some(),
    }
}

fn is_first(kind: Kind, label: &str) -> bool {
    matches!((kind, label), (Kind::Lower, "a") | (Kind::Upper, "A") | (Kind::Digit, "1") | (Kind::Roman, "i"))
}

fn successor(kind: Kind, label: &str) -> Option<String> {
    match kind {
        Kind::Lower | Kind::Upper => {
            let c = label.chars().next()?;
            char::from_u32(c as u32 + 1).map(|n| n.to_string())
        }
        Kind::Digit => label.parse::<u32>().ok().map(|n| (n + 1).to_string()),
        Kind::Roman => roman_value(label).map(|n| to_roman(n + 1)),
    }
}

/// Assigns a nesting level to each marker in sequence.
#[derive(Debug, Default)]
pub struct LevelTracker {
    open: Vec<String>,
}

impl LevelTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens `label` and returns the full label path it now sits at.
    pub fn push(&mut self, label: &str) -> Vec<String> {
        let depth = self.open.len();
        let mut child = None;
        let mut sibling = None;
        for (level, &kind) in LEVEL_KINDS.iter().enumerate() {
            if !fits(kind, label) {
                continue;
            }
            if level == depth && is_first(kind, label) {
                child = Some(level);
            } else if level < depth && successor(kind, &self.open[level]).as_deref() == Some(label) {
                sibling = sibling.or(Some(level)).map(|s: usize| s.max(level));
            }
        }
        // `(i)` right after `(h)(2)` opens the deeper level.
        let level = child.or(sibling).unwrap_or_else(|| {
            LEVEL_KINDS
                .iter()
                .enumerate()
                .take(depth + 1)
                .rev()
                .filter(|(_, &k)| fits(k, label))
                .map(|(l, _)| l)
                .next()
                .unwrap_or(depth.min(LEVEL_KINDS.len() - 1))
        });
        self.open.truncate(level);
        self.open.push(label.to_string());
        self.open.clone()
    }
}

/// Splits leading `(x)(y)` markers off paragraph text.
fn leading_markers(text: &str) -> (Vec<String>, &str) {
    let mut labels = Vec::new();
    let mut rest = text.trim_start();
    while let Some(inner) = rest.strip_prefix('(') {
        let Some(close) = inner.find(')') else { break };
        let label = &inner[..close];
        if label.is_empty() || label.len() > 5 || !label.chars().all(|c| c.is_ascii_alphanumeric()) {
            break;
        }
        labels.push(label.to_string());
        rest = inner[close + 1..].trim_start();
    }
    (labels, rest)
}

fn collapse(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn text_of(node: roxmltree::Node) -> String {
    collapse(&node.descendants().filter(|n| n.is_text()).filter_map(|n| n.text()).collect::<String>())
}

fn head_of(node: roxmltree::Node) -> String {
    node.children().find(|c| c.has_tag_name("HEAD")).map(text_of).unwrap_or_default()
}

/// Converts one part's XML into the interchange format.
///
/// Synthetic ids follow the `Part164` / `Part164SubpartE` convention; section
/// nodes carry their heading as content. `subparts` limits output to the
/// listed subpart letters when non-empty.
pub fn document_from_xml(xml: &str, law: &LawProfile, subparts: &[&str]) -> Result<StatuteSourceDocument, String> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| e.to_string())?;
    let mut nodes = vec![SourceNode { id: law.name.clone(), heading: law.title.clone(), content: law.title.clone(), depth: 0 }];

    for part in doc.descendants().filter(|n| n.attribute("TYPE") == Some("PART")) {
        let part_no = part.attribute("N").unwrap_or_default().trim().to_string();
        let part_id = format!("Part{part_no}");
        let head = head_of(part);
        nodes.push(SourceNode { id: part_id.clone(), heading: head.clone(), content: head, depth: 1 });

        for child in part.children().filter(|c| c.is_element()) {
            match child.attribute("TYPE") {
                Some("SUBPART") => {
                    let letter = child.attribute("N").unwrap_or_default().trim();
                    if !subparts.is_empty() && !subparts.contains(&letter) {
                        continue;
                    }
                    let head = head_of(child);
                    nodes.push(SourceNode {
                        id: format!("{part_id}Subpart{letter}"),
                        heading: head.clone(),
                        content: head,
                        depth: 2,
                    });
                    for section in child.descendants().filter(|n| n.attribute("TYPE") == Some("SECTION")) {
                        push_section(&mut nodes, section, 3)?;
                    }
                }
                Some("SECTION") if subparts.is_empty() => push_section(&mut nodes, child, 2)?,
                _ => {}
            }
        }
    }
    if nodes.len() == 1 {
        return Err("no PART element found".into());
    }
    Ok(StatuteSourceDocument { law_name: law.name.clone(), nodes })
}

fn push_section(nodes: &mut Vec<SourceNode>, section: roxmltree::Node, depth: usize) -> Result<(), String> {
    let raw_n = section.attribute("N").unwrap_or_default();
    let number: String = raw_n.chars().filter(|c| c.is_ascii_digit() || *c == '.').collect();
    if number.is_empty() {
        return Err(format!("section without number: `{raw_n}`"));
    }
    let head = head_of(section);
    let section_index = nodes.len();
    nodes.push(SourceNode { id: number.clone(), heading: head.clone(), content: head, depth });

    let mut tracker = LevelTracker::new();
    let mut seen: Vec<String> = Vec::new();
    let mut current = section_index;
    for p in section.children().filter(|c| c.has_tag_name("P")) {
        let text = text_of(p);
        let (markers, _) = leading_markers(&text);
        if markers.is_empty() {
            // continuation of the previous paragraph
            let target = &mut nodes[current];
            if target.content.is_empty() {
                target.content = text;
            } else {
                target.content = format!("{} {}", target.content, text);
            }
            continue;
        }
        for (k, marker) in markers.iter().enumerate() {
            let path = tracker.push(marker);
            let id = format!("{number}({})", path.join(")("));
            let last = k + 1 == markers.len();
            if let Some(pos) = seen.iter().position(|s| *s == id) {
                // a repeated marker is a continuation, not a new node
                current = section_index + 1 + pos;
                if last {
                    let target = &mut nodes[current];
                    target.content = format!("{} {}", target.content, text).trim().to_string();
                }
                continue;
            }
            seen.push(id.clone());
            current = nodes.len();
            nodes.push(SourceNode {
                id,
                heading: format!("({marker})"),
                content: if last { text.clone() } else { String::new() },
                depth: depth + path.len(),
            });
        }
    }
    Ok(())
}

/// Fetches one part of a title as full-text XML.
pub fn fetch_part_xml(
    transport: &dyn HttpTransport,
    base: &str,
    date: &str,
    title: u32,
    part: u32,
) -> Result<String, String> {
    let url = format!("{}/full/{date}/title-{title}.xml?part={part}", base.trim_end_matches('/'));
    let reply = transport.get(&url, None)?;
    if !reply.is_success() {
        return Err(format!("{url}: HTTP {}", reply.status));
    }
    Ok(reply.body)
}
