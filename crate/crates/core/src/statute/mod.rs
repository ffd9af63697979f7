//! Statute text as a graph of sections, and norms as root-to-leaf paths through it.
//!
//! A [`StatuteGraph`] holds two edge kinds: `subsume` edges mirror document
//! nesting and always form a tree; `refer` edges record cross-references found
//! in node content and never contribute text to a norm.

mod classify;
pub mod ecfr;

pub use ecfr::ECFR_BASE;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use classify::{
    classification_prompt, classification_request, classification_resample, classify_norms, parse_classification, seed_norms, ClassifyOptions,
    SeedReport,
};

use crate::error::StatuteError;
use crate::labels::Polarity;
use crate::norm_id::{NormId, EMBEDDED_ID};

/// A node identifier: either a real section id or a synthetic label such as
/// `HIPAA` or `Part164SubpartE` for the levels above sections.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeId {
    Section(NormId),
    Label(String),
}

impl NodeId {
    pub fn as_norm_id(&self) -> Option<&NormId> {
        match self {
            NodeId::Section(id) => Some(id),
            NodeId::Label(_) => None,
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Section(id) => id.fmt(f),
            NodeId::Label(label) => f.write_str(label),
        }
    }
}

impl FromStr for NodeId {
    type Err = StatuteError;

    /// Anything that looks like a section id must parse as one; bare words are
    /// synthetic labels with whitespace removed.
    fn from_str(raw: &str) -> Result<Self, Self::Err> {
        let trimmed = raw.trim();
        let looks_like_section = trimmed.starts_with(|c: char| c.is_ascii_digit() || c == '§')
            || trimmed.contains(['.', '(', ')']);
        if looks_like_section {
            return trimmed
                .parse::<NormId>()
                .map(NodeId::Section)
                .map_err(|_| StatuteError::MalformedId(raw.to_string()));
        }
        let label: String = trimmed.chars().filter(|c| !c.is_whitespace()).collect();
        if label.is_empty() || !label.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-') {
            return Err(StatuteError::MalformedId(raw.to_string()));
        }
        Ok(NodeId::Label(label))
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// One entry of the pre-order interchange format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceNode {
    pub id: String,
    #[serde(default)]
    pub heading: String,
    #[serde(default)]
    pub content: String,
    pub depth: usize,
}

/// Hierarchical statute text: a pre-order node list where `depth` encodes nesting.
///
/// If the first node has depth 0 it is the root. Otherwise a root labeled
/// `law_name` is synthesized and the listed nodes start at depth 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatuteSourceDocument {
    pub law_name: String,
    pub nodes: Vec<SourceNode>,
}

impl StatuteSourceDocument {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatuteNode {
    pub id: NodeId,
    pub heading: String,
    pub content: String,
    pub depth: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

impl StatuteNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// The text a node contributes to a norm path: its content, or its heading
    /// when the content is empty.
    pub fn path_text(&self) -> &str {
        if self.content.trim().is_empty() {
            self.heading.trim()
        } else {
            self.content.trim()
        }
    }
}

/// An edge `(from, to)` between canonical node ids.
pub type Edge = (String, String);

#[derive(Debug, Clone, PartialEq)]
pub struct StatuteGraph {
    law_name: String,
    nodes: Vec<StatuteNode>,
    index: BTreeMap<String, usize>,
    subsume_edges: BTreeSet<Edge>,
    refer_edges: BTreeSet<Edge>,
}

impl StatuteGraph {
    pub fn law_name(&self) -> &str {
        &self.law_name
    }

    /// Nodes in document order; index 0 is the root.
    pub fn nodes(&self) -> &[StatuteNode] {
        &self.nodes
    }

    pub fn root(&self) -> &StatuteNode {
        &self.nodes[0]
    }

    pub fn get(&self, id: &str) -> Option<&StatuteNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// `(child, parent)` pairs.
    pub fn subsume_edges(&self) -> &BTreeSet<Edge> {
        &self.subsume_edges
    }

    /// `(source, target)` pairs; targets may be absent from the graph.
    pub fn refer_edges(&self) -> &BTreeSet<Edge> {
        &self.refer_edges
    }

    pub fn dangling_refs(&self) -> Vec<&Edge> {
        self.refer_edges.iter().filter(|(_, to)| !self.contains(to)).collect()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &StatuteNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    /// Node indices from the root down to `index`.
    pub fn path_to(&self, index: usize) -> Vec<usize> {
        let mut path = vec![index];
        let mut cur = index;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Checks the tree property: one root, every other node has exactly one
    /// parent, and the root is reachable from every node.
    pub fn validate(&self) -> Result<(), StatuteError> {
        let roots = self.nodes.iter().filter(|n| n.parent.is_none()).count();
        if roots != 1 || self.nodes[0].parent.is_some() {
            return Err(StatuteError::Structure(format!("expected exactly one root, found {roots}")));
        }
        if self.subsume_edges.len() != self.nodes.len() - 1 {
            return Err(StatuteError::Structure("subsume edge count does not match node count".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let mut cur = i;
            let mut steps = 0;
            while let Some(p) = self.nodes[cur].parent {
                if !self.nodes[p].children.contains(&cur) {
                    return Err(StatuteError::Structure(format!("`{}` missing from its parent", node.id)));
                }
                cur = p;
                steps += 1;
                if steps > self.nodes.len() {
                    return Err(StatuteError::Structure(format!("cycle through `{}`", node.id)));
                }
            }
            if cur != 0 {
                return Err(StatuteError::Structure(format!("root unreachable from `{}`", node.id)));
            }
        }
        Ok(())
    }

    /// Back to the interchange format, with edges attached for inspection.
    pub fn to_export(&self) -> GraphExport {
        GraphExport {
            law_name: self.law_name.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| SourceNode {
                    id: n.id.to_string(),
                    heading: n.heading.clone(),
                    content: n.content.clone(),
                    depth: n.depth,
                })
                .collect(),
            subsume_edges: self.subsume_edges.iter().cloned().collect(),
            refer_edges: self.refer_edges.iter().cloned().collect(),
            dangling_refs: self.dangling_refs().into_iter().cloned().collect(),
        }
    }
}

/// Serialized graph. `nodes` is a valid [`StatuteSourceDocument`] node list,
/// so reloading re-derives and re-validates every edge.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphExport {
    pub law_name: String,
    pub nodes: Vec<SourceNode>,
    #[serde(default)]
    pub subsume_edges: Vec<Edge>,
    #[serde(default)]
    pub refer_edges: Vec<Edge>,
    #[serde(default)]
    pub dangling_refs: Vec<Edge>,
}

impl GraphExport {
    pub fn into_document(self) -> StatuteSourceDocument {
        StatuteSourceDocument { law_name: self.law_name, nodes: self.nodes }
    }
}

static PARAGRAPH_REF: Lazy<Regex> = Lazy::new(|| {
    Regex::new(
        r"(?i)\bparagraphs?\s+((?:\(\s*[A-Za-z0-9]+\s*\)\s*)+)(?:\s*of\s+(?:this\s+section|§+\s*(\d+\.\d+)))?",
    )
    .unwrap()
});

/// Cross-references in `content`, resolved relative to `source` when the
/// text says `paragraph (x) of this section`.
fn extract_refs(source: &NodeId, content: &str) -> Vec<NodeId> {
    let mut out: Vec<NodeId> = Vec::new();
    let mut covered: Vec<(usize, usize)> = Vec::new();
    let push = |out: &mut Vec<NodeId>, id: NodeId| {
        if &id != source && !out.contains(&id) {
            out.push(id);
        }
    };

    for caps in PARAGRAPH_REF.captures_iter(content) {
        let whole = caps.get(0).unwrap();
        let labels = NormId::parse_labels(&caps[1]);
        let base = match caps.get(2) {
            Some(sec) => sec.as_str().parse::<NormId>().ok(),
            None => source.as_norm_id().map(NormId::section_id),
        };
        if let Some(Ok(target)) = base.map(|b| b.with_labels(labels)) {
            covered.push((whole.start(), whole.end()));
            push(&mut out, NodeId::Section(target));
        }
    }

    for caps in EMBEDDED_ID.captures_iter(content) {
        let m = caps.get(0).unwrap();
        if covered.iter().any(|&(s, e)| m.start() < e && m.end() > s) {
            continue;
        }
        let raw = format!("{}.{}{}", &caps[1], &caps[2], &caps[3]);
        if let Ok(id) = raw.parse::<NormId>() {
            push(&mut out, NodeId::Section(id));
        }
    }
    out
}

/// Builds the section graph from the pre-order interchange format.
pub fn parse_statute(doc: &StatuteSourceDocument) -> Result<StatuteGraph, StatuteError> {
    if doc.nodes.is_empty() {
        return Err(StatuteError::EmptyDocument);
    }

    let mut source: Vec<SourceNode> = Vec::with_capacity(doc.nodes.len() + 1);
    if doc.nodes[0].depth != 0 {
        source.push(SourceNode {
            id: doc.law_name.clone(),
            heading: doc.law_name.clone(),
            content: String::new(),
            depth: 0,
        });
    }
    source.extend(doc.nodes.iter().cloned());

    let mut nodes: Vec<StatuteNode> = Vec::with_capacity(source.len());
    let mut index = BTreeMap::new();
    let mut subsume_edges = BTreeSet::new();
    // stack[d] = index of the most recent node at depth d
    let mut stack: Vec<usize> = Vec::new();

    for (i, raw) in source.iter().enumerate() {
        let id: NodeId = raw.id.parse()?;
        let key = id.to_string();
        if index.contains_key(&key) {
            return Err(StatuteError::DuplicateId(key));
        }
        if i > 0 && raw.depth == 0 {
            return Err(StatuteError::Structure(format!("second root `{key}`")));
        }
        if raw.depth > stack.len() {
            return Err(StatuteError::Structure(format!(
                "`{key}` at depth {} skips a level (previous depth {})",
                raw.depth,
                stack.len().saturating_sub(1)
            )));
        }
        stack.truncate(raw.depth);
        let parent = stack.last().copied();
        if let Some(p) = parent {
            nodes[p].children.push(i);
            subsume_edges.insert((key.clone(), nodes[p].id.to_string()));
        }
        nodes.push(StatuteNode {
            id,
            heading: raw.heading.clone(),
            content: raw.content.clone(),
            depth: raw.depth,
            parent,
            children: Vec::new(),
        });
        index.insert(key, i);
        stack.push(i);
    }

    for node in &nodes {
        if node.is_leaf() && node.path_text().is_empty() {
            return Err(StatuteError::EmptyLeaf(node.id.to_string()));
        }
    }

    let mut refer_edges = BTreeSet::new();
    for node in &nodes {
        for target in extract_refs(&node.id, &node.content) {
            refer_edges.insert((node.id.to_string(), target.to_string()));
        }
    }

    let graph = StatuteGraph {
        law_name: doc.law_name.clone(),
        nodes,
        index,
        subsume_edges,
        refer_edges,
    };
    graph.validate()?;
    Ok(graph)
}

/// Norm categories assigned by classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NormType {
    Definition,
    Permit,
    Forbid,
    Exception,
    Requirement,
    Other,
}

impl NormType {
    pub const ALL: [NormType; 6] = [
        NormType::Definition,
        NormType::Permit,
        NormType::Forbid,
        NormType::Exception,
        NormType::Requirement,
        NormType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NormType::Definition => "Definition",
            NormType::Permit => "Permit",
            NormType::Forbid => "Forbid",
            NormType::Exception => "Exception",
            NormType::Requirement => "Requirement",
            NormType::Other => "Other",
        }
    }
}

/// One leaf of the statute with the text of its whole root path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Norm {
    pub leaf_id: NodeId,
    pub path_ids: Vec<NodeId>,
    /// One `id: text` line per path node, root first.
    pub full_text: String,
    #[serde(default)]
    pub types: BTreeSet<NormType>,
    #[serde(default)]
    pub type_payloads: BTreeMap<NormType, String>,
    /// Set when classification gave up and fell back to `Other`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub classification_failed: bool,
    /// Set by [`seed_norms`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarity: Option<Polarity>,
}

impl Norm {
    /// The leaf as a section id; synthetic-root norms have none.
    pub fn norm_id(&self) -> Option<&NormId> {
        self.leaf_id.as_norm_id()
    }

    /// `(id, text)` for each path line.
    pub fn segments(&self) -> Vec<(&str, &str)> {
        self.full_text
            .lines()
            .map(|line| match line.split_once(':') {
                Some((id, text)) => (id.trim(), text.trim()),
                None => ("", line.trim()),
            })
            .collect()
    }

    /// Path lines joined on one line, for prompts that want a single line.
    pub fn single_line_text(&self) -> String {
        self.full_text.lines().map(str::trim).collect::<Vec<_>>().join(" ")
    }
}

/// One norm per leaf, in document order.
pub fn extract_norms(graph: &StatuteGraph) -> Vec<Norm> {
    graph
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, n)| n.is_leaf())
        .map(|(i, leaf)| {
            let path = graph.path_to(i);
            let full_text = path
                .iter()
                .map(|&p| {
                    let node = &graph.nodes()[p];
                    format!("{}: {}", node.id, node.path_text())
                })
                .collect::<Vec<_>>()
                .join("\n");
            Norm {
                leaf_id: leaf.id.clone(),
                path_ids: path.iter().map(|&p| graph.nodes()[p].id.clone()).collect(),
                full_text,
                types: BTreeSet::new(),
                type_payloads: BTreeMap::new(),
                classification_failed: false,
                polarity: None,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: &str, content: &str, depth: usize) -> SourceNode {
        SourceNode { id: id.into(), heading: String::new(), content: content.into(), depth }
    }

    fn small_doc() -> StatuteSourceDocument {
        StatuteSourceDocument {
            law_name: "HIPAA".into(),
            nodes: vec![
                node("HIPAA", "HIPAA Privacy Rule", 0),
                node("164.502", "§ 164.502 Uses and disclosures.", 1),
                node("164.502(a)", "(a) Standard.", 2),
                node("164.502(a)(1)", "(1) Permitted uses.", 3),
                node("164.502(a)(1)(ii)", "(ii) For treatment, subject to § 164.504(b).", 4),
                node("164.502(a)(2)", "(2) Required disclosures, see paragraph (a)(1) of this section.", 3),
                node("164.504", "§ 164.504 Organizational requirements.", 1),
            ],
        }
    }

    #[test]
    fn subsume_edges_follow_nesting() {
        let g = parse_statute(&small_doc()).unwrap();
        assert!(g.subsume_edges().contains(&("164.502(a)".into(), "164.502".into())));
        assert!(g.subsume_edges().contains(&("164.502(a)(1)(ii)".into(), "164.502(a)(1)".into())));
        assert_eq!(g.subsume_edges().len(), g.nodes().len() - 1);
        g.validate().unwrap();
    }

    #[test]
    fn refer_edges_from_section_and_paragraph_mentions() {
        let g = parse_statute(&small_doc()).unwrap();
        let refs = g.refer_edges();
        assert!(refs.contains(&("164.502(a)(1)(ii)".into(), "164.504(b)".into())));
        assert!(refs.contains(&("164.502(a)(2)".into(), "164.502(a)(1)".into())));
        // self mentions in headings are not references
        assert!(!refs.iter().any(|(a, b)| a == b));
        let dangling: Vec<_> = g.dangling_refs().into_iter().map(|(_, t)| t.as_str()).collect();
        assert_eq!(dangling, ["164.504(b)"]);
    }

    #[test]
    fn paragraph_of_other_section() {
        let refs = extract_refs(
            &NodeId::Section("164.502(b)".parse().unwrap()),
            "as provided in paragraph (c)(1) of § 164.512",
        );
        let refs: Vec<String> = refs.iter().map(|r| r.to_string()).collect();
        assert_eq!(refs, ["164.512(c)(1)"]);
    }

    #[test]
    fn empty_document_rejected() {
        let doc = StatuteSourceDocument { law_name: "HIPAA".into(), nodes: vec![] };
        assert_eq!(parse_statute(&doc), Err(StatuteError::EmptyDocument));
    }

    #[test]
    fn duplicate_ids_rejected_after_canonicalization() {
        let mut doc = small_doc();
        doc.nodes.push(node("164.502 (A)", "dup", 2));
        assert_eq!(parse_statute(&doc), Err(StatuteError::DuplicateId("164.502(a)".into())));
    }

    #[test]
    fn malformed_ids_rejected() {
        let mut doc = small_doc();
        doc.nodes.push(node("164.502(a", "bad", 2));
        assert!(matches!(parse_statute(&doc), Err(StatuteError::MalformedId(_))));
    }

    #[test]
    fn depth_jumps_rejected() {
        let mut doc = small_doc();
        doc.nodes.push(node("164.504(b)(1)", "deep", 3));
        assert!(matches!(parse_statute(&doc), Err(StatuteError::Structure(_))));
    }

    #[test]
    fn root_synthesized_when_missing() {
        let doc = StatuteSourceDocument {
            law_name: "HIPAA".into(),
            nodes: vec![node("164.502", "text", 1), node("164.504", "more", 1)],
        };
        let g = parse_statute(&doc).unwrap();
        assert_eq!(g.root().id, NodeId::Label("HIPAA".into()));
        assert_eq!(extract_norms(&g).len(), 2);
    }

    #[test]
    fn norms_concatenate_root_first() {
        let g = parse_statute(&small_doc()).unwrap();
        let norms = extract_norms(&g);
        assert_eq!(norms.len(), g.leaves().count());
        let n = norms.iter().find(|n| n.leaf_id.to_string() == "164.502(a)(1)(ii)").unwrap();
        let ids: Vec<String> = n.path_ids.iter().map(|i| i.to_string()).collect();
        assert_eq!(ids, ["HIPAA", "164.502", "164.502(a)", "164.502(a)(1)", "164.502(a)(1)(ii)"]);
        assert_eq!(n.full_text.lines().count(), n.path_ids.len());
        assert_eq!(n.segments()[0], ("HIPAA", "HIPAA Privacy Rule"));
        // refer edges contribute nothing
        assert!(!n.full_text.contains("Organizational requirements"));
    }

    #[test]
    fn root_only_graph_yields_one_norm() {
        let doc = StatuteSourceDocument {
            law_name: "HIPAA".into(),
            nodes: vec![node("HIPAA", "HIPAA Privacy Rule", 0)],
        };
        let norms = extract_norms(&parse_statute(&doc).unwrap());
        assert_eq!(norms.len(), 1);
        assert_eq!(norms[0].full_text, "HIPAA: HIPAA Privacy Rule");
    }

    #[test]
    fn empty_interior_content_falls_back_to_heading() {
        let doc = StatuteSourceDocument {
            law_name: "HIPAA".into(),
            nodes: vec![
                SourceNode { id: "HIPAA".into(), heading: "HIPAA Privacy Rule".into(), content: String::new(), depth: 0 },
                node("164.502", "leaf", 1),
            ],
        };
        let norms = extract_norms(&parse_statute(&doc).unwrap());
        assert_eq!(norms[0].full_text, "HIPAA: HIPAA Privacy Rule\n164.502: leaf");
    }

    #[test]
    fn export_reloads_to_same_graph() {
        let g = parse_statute(&small_doc()).unwrap();
        let json = serde_json::to_string(&g.to_export()).unwrap();
        let back: GraphExport = serde_json::from_str(&json).unwrap();
        assert_eq!(parse_statute(&back.into_document()).unwrap(), g);
    }
}
