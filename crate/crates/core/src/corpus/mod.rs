//! Real court cases: fetching by keyword, length filtering, structured
//! extraction through the gateway, and train/test assembly.

mod assemble;
mod cap;

use std::collections::BTreeSet;
use std::path::Path;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{CorpusError, GatewayError, ParseError};
use crate::forge::{applicability_of, strip_background_label, Case, Provenance};
use crate::gateway::{ChatRequest, ModelGateway};
use crate::labels::Verdict;
use crate::norm_id::NormId;
use crate::qa::{is_sentinel, split_questions, FlowFeatures};
use crate::LawProfile;

pub use assemble::{assemble, AssembleConfig, BUNDLE_FILES, DatasetBundle, NegativeSampling, SplitCount, SplitManifest};
pub use cap::{CapClient, CAP_API_BASE, ENV_CAP_KEY};

pub const MIN_WORDS: usize = 100;
pub const MAX_WORDS: usize = 30_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "SnapshotLine")]
pub struct RealCaseRecord {
    pub source_id: String,
    pub court: String,
    pub decision_text: String,
    #[serde(skip_serializing)]
    pub word_count: usize,
    pub query_keyword: String,
}

#[derive(Deserialize)]
struct SnapshotLine {
    source_id: String,
    #[serde(default)]
    court: String,
    decision_text: String,
    #[serde(default)]
    query_keyword: String,
}

impl From<SnapshotLine> for RealCaseRecord {
    fn from(l: SnapshotLine) -> Self {
        RealCaseRecord::new(l.source_id, l.court, l.decision_text, l.query_keyword)
    }
}

impl RealCaseRecord {
    pub fn new(source_id: impl Into<String>, court: impl Into<String>, decision_text: impl Into<String>, query_keyword: impl Into<String>) -> Self {
        let decision_text = decision_text.into();
        RealCaseRecord {
            source_id: source_id.into(),
            court: court.into(),
            word_count: decision_text.split_whitespace().count(),
            decision_text,
            query_keyword: query_keyword.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FetchLimits {
    pub max_results: usize,
    pub page_size: usize,
}

impl Default for FetchLimits {
    fn default() -> Self {
        FetchLimits { max_results: 2000, page_size: 100 }
    }
}

/// Where records come from.
pub enum CaseSource<'a> {
    Snapshot(&'a Path),
    Api(&'a CapClient),
}

/// Reads snapshot JSONL.
pub fn read_snapshot(path: &Path) -> Result<Vec<RealCaseRecord>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CorpusError::SnapshotMissing(path.to_path_buf()),
        _ => CorpusError::Snapshot { path: path.to_path_buf(), message: e.to_string() },
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l)
                .map_err(|e| CorpusError::Snapshot { path: path.to_path_buf(), message: format!("line {}: {e}", n + 1) })
        })
        .collect()
}

pub fn write_snapshot(records: &[RealCaseRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
}

/// Records for one keyword in delivered order, deduplicated by source id and
/// truncated. Snapshot lines tagged with another keyword are skipped;
/// untagged lines take this keyword.
pub fn fetch_cases(keyword: &str, source: CaseSource, limits: FetchLimits) -> Result<Vec<RealCaseRecord>, CorpusError> {
    let raw = match source {
        CaseSource::Snapshot(path) => read_snapshot(path)?
            .into_iter()
            .filter(|r| r.query_keyword.is_empty() || r.query_keyword.eq_ignore_ascii_case(keyword))
            .collect(),
        CaseSource::Api(client) => client.search(keyword, limits)?,
    };
    let mut seen = BTreeSet::new();
    Ok(raw
        .into_iter()
        .filter(|r| seen.insert(r.source_id.clone()))
        .map(|mut r| {
            r.query_keyword = keyword.to_string();
            r
        })
        .take(limits.max_results)
        .collect())
}

/// Keeps records of 100 to 30,000 words, both bounds inclusive.
pub fn length_filter(records: Vec<RealCaseRecord>) -> Vec<RealCaseRecord> {
    records.into_iter().filter(|r| (MIN_WORDS..=MAX_WORDS).contains(&r.word_count)).collect()
}

/// The real-case extraction prompt with the decision text substituted.
pub fn extraction_prompt(law: &LawProfile, case_text: &str) -> String {
    let title = &law.title;
    let name = &law.name;
    let example = &law.id_example;
    format!(
        r#"Now you are a legal expert on {title} that answers questions as simply as possible.

Read the case: {case_text}.

Q1. If the case involves the flow of private information.
Please annotate the eleven message characteristics [Sender, Sender Role, Recipient, Recipient Role, Subject, Subject Role, Type, Purpose, In Reply To, Consented By, Belief] about the flow of private information in the case as a list. If the characteristic does not exist, just fill in None.

The "Sender" and "Recipient" fields indicate the sender and recipient of the message.
The "Sender Role" and "Recipient Role" fields indicate the role of the sender and recipient (e.g., doctor, patient).
The "Subject" and "Subject Role" field identifies the subject whose personal health information is contained in the message and the role of the subject.
The "Type" field defines what kind of information would be passed, such as name or location.
The "Purpose" field indicates a reason the message is being sent, such as for medical treatment.
The "In Reply To" field was added to describe a disclosure where the message is sent as a response to some earlier message.
The "Consented By" field indicates which people have consented to the message disclosure.
The "Belief" field contains a collection of assertions about the current situation, such as whether this is a medical emergency, or whether the disclosure is (in the opinion of the sender) in the best interest of the health of the patient.

Q2: Please retrieve all the specific {name} regulation IDs that are the permission or prohibition description of the case. Please be as specific as possible to the sub-section id (e.g., {example}). If the regulations do not exist, just fill in None.

Q3: Please classify the type of regulation(s). The regulation type is one of the following: "Definition", "Permit", "Forbid", "Exception", "Requirement", "Permit and Exception", "Forbid and Exception", "Permit and Requirement", "Forbid and Requirement", "Permit and Exception and Requirement", "Forbid and Exception and Requirement", "Other".

Q4: Please classify the relation between the case and each regulation in Q3 as one of the following: "Permit", "Forbid", and "Not Applicable".

Q5: A case may be associated with multiple regulations. If it is permitted by some regulations and not forbidden by any of the regulations, the case complies with {name}, answer "Permit". If it is not permitted by any of the regulations or forbidden by some regulations, the case violates {name}, answer "Forbid". Otherwise, if the case is not applicable to {name}, answer "Not Applicable". Please classify the relation between the flow of private information in the case and {name} as one of the following: "Permit", "Forbid", and "Not Applicable".

Q6: With the eleven characteristics in Q2, restore the BACKGROUND story of the case, especially about the flow of private information.

The case should not include any information about the regulation(s) in Q2 and the court decision.
Make sure that the eleven characteristics are obviously included in the BACKGROUND story. The background must be a detailed story in plain text, spanning between 200 to 500 words."#
    )
}

/// Reasons a human should look at an extracted case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationFlag {
    /// A vital flow feature is missing.
    MissingFlow,
    /// The background still reads like the court's analysis.
    CourtAnalysis,
    /// No single clear statute-level conclusion.
    UncertainConclusion,
}

/// One extracted case with its review flags; also the line format of the
/// annotation queue and of reviewed override files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub source_id: String,
    pub query_keyword: String,
    #[serde(default)]
    pub flags: Vec<AnnotationFlag>,
    pub case: Case,
}

static COURT_LANGUAGE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)\b(?:the court|this court|judge|we hold|held that|ruled|motion to|summary judgment|affirm(?:ed)?|revers(?:e|ed)|remand(?:ed)?|jurisdiction)\b|§").unwrap()
});

fn count_labels(text: &str) -> usize {
    let lower = text.to_lowercase();
    let na = lower.matches("not applicable").count();
    let permit = lower.matches("permit").count();
    let forbid = lower.matches("forbid").count();
    usize::from(na > 0) + usize::from(permit > 0) + usize::from(forbid > 0)
}

/// Reads one extraction answer: Q1 features, Q2 ids, Q5 relation, Q6 background.
pub fn parse_extraction(raw: &str, record: &RealCaseRecord) -> Result<Extraction, ParseError> {
    let answers = split_questions(raw);
    let background = answers.get(&6).map(|b| strip_background_label(b)).unwrap_or_default();
    if background.split_whitespace().next().is_none() {
        return Err(ParseError::UnparseableResponse(format!("{}: no background (Q6) section", record.source_id)));
    }
    let features = answers.get(&1).map(|t| FlowFeatures::parse(t)).unwrap_or_default();
    let cited_norm_ids: Vec<NormId> = answers.get(&2).filter(|t| !is_sentinel(t)).map(|t| NormId::find_all(t)).unwrap_or_default();
    let q5 = answers.get(&5).map(String::as_str).unwrap_or("");
    let verdict = Verdict::find_first(q5);

    let mut flags = Vec::new();
    if !features.has_vital_features() {
        flags.push(AnnotationFlag::MissingFlow);
    }
    if COURT_LANGUAGE.is_match(&background) {
        flags.push(AnnotationFlag::CourtAnalysis);
    }
    let applicable_without_norm = matches!(verdict, Some(Verdict::Permit | Verdict::Forbid)) && cited_norm_ids.is_empty();
    if verdict.is_none() || count_labels(q5) > 1 || applicable_without_norm {
        flags.push(AnnotationFlag::UncertainConclusion);
    }

    Ok(Extraction {
        source_id: record.source_id.clone(),
        query_keyword: record.query_keyword.clone(),
        flags,
        case: Case {
            background,
            features,
            cited_norm_ids,
            appl_conclusion: verdict.map(applicability_of),
            comp_conclusion: verdict,
            seed_norm_id: None,
            provenance: Provenance::Real,
            raw_response: raw.to_string(),
        },
    })
}

pub fn extraction_request(law: &LawProfile, record: &RealCaseRecord) -> ChatRequest {
    ChatRequest::new(extraction_prompt(law, &record.decision_text))
        .temperature(0.0)
        .max_tokens(2048)
        .tag(format!("extract:{}", record.source_id))
}

pub fn extract_real_case(record: &RealCaseRecord, gateway: &ModelGateway, law: &LawProfile) -> Result<Extraction, CorpusError> {
    let resp = gateway.complete(&extraction_request(law, record))?;
    let text = resp
        .texts
        .first()
        .ok_or_else(|| GatewayError::MalformedRemoteResponse("no completion text".into()))?;
    Ok(parse_extraction(text, record)?)
}

/// Extracts every record in parallel, keeping input order.
pub fn extract_all(records: &[RealCaseRecord], gateway: &ModelGateway, law: &LawProfile) -> Vec<Result<Extraction, CorpusError>> {
    gateway.par_map(records, |r| extract_real_case(r, gateway, law))
}

/// A reviewed queue line. `drop` removes the case; otherwise `case` replaces
/// the extracted one and its flags are cleared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Override {
    pub source_id: String,
    #[serde(default)]
    pub drop: bool,
    pub case: Option<Case>,
}

pub fn read_overrides(text: &str) -> Result<Vec<Override>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", n + 1)))
        .collect()
}

/// Reviewed overrides win over fresh extractions, matched by source id.
pub fn apply_overrides(extractions: Vec<Extraction>, overrides: &[Override]) -> Vec<Extraction> {
    extractions
        .into_iter()
        .filter_map(|mut e| match overrides.iter().find(|o| o.source_id == e.source_id) {
            Some(o) if o.drop => None,
            Some(o) => {
                if let Some(case) = &o.case {
                    e.case = case.clone();
                }
                e.flags.clear();
                Some(e)
            }
            None => Some(e),
        })
        .collect()
}
