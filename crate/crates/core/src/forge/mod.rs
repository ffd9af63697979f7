//! Case synthesis: the generation prompt, response parsing, the feature and
//! consistency filters, and per-norm diversity selection.

mod rouge;
mod select;
mod synth;

use std::collections::BTreeMap;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ci::InformationFlow;
use crate::error::{FlowError, ParseError};
use crate::labels::{Applicability, Verdict};
use crate::norm_id::NormId;
use crate::qa::{split_questions, FlowFeatures};
use crate::statute::Norm;
use crate::LawProfile;

pub use rouge::{lcs_len, rouge_l, rouge_l_tokens, tokenize};
pub use select::{diversity_select, Selection, Selected};
pub use synth::{run_synthesis, Disposition, NormOutcome, StageCounts, SynthesisConfig, SynthesisManifest, SynthesisRun};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    Synthetic,
    Real,
}

/// One case. Serializes to the flat export record; the raw model answer is
/// kept in memory only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub background: String,
    #[serde(flatten)]
    pub features: FlowFeatures,
    #[serde(default)]
    pub cited_norm_ids: Vec<NormId>,
    #[serde(rename = "applicability")]
    pub appl_conclusion: Option<Applicability>,
    #[serde(rename = "compliance")]
    pub comp_conclusion: Option<Verdict>,
    pub seed_norm_id: Option<NormId>,
    pub provenance: Provenance,
    #[serde(skip)]
    pub raw_response: String,
}

impl Case {
    pub fn flow(&self) -> Result<InformationFlow, FlowError> {
        InformationFlow::from_features(&self.features)
    }

    /// SHA-256 of the whitespace-normalized background; used for split hygiene.
    pub fn background_hash(&self) -> String {
        let norm = self.background.split_whitespace().collect::<Vec<_>>().join(" ");
        hex::encode(Sha256::digest(norm.as_bytes()))
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("case serializes")
    }
}

/// Selected cases plus, per seed norm, the indices of its cases.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CaseSet {
    pub cases: Vec<Case>,
    pub per_norm_index: BTreeMap<NormId, Vec<usize>>,
}

impl CaseSet {
    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        self.cases.iter().map(|c| c.to_json_line() + "\n").collect()
    }

    /// Rebuilds the index from each case's seed id.
    pub fn from_cases(cases: Vec<Case>) -> CaseSet {
        let mut per_norm_index: BTreeMap<NormId, Vec<usize>> = BTreeMap::new();
        for (i, c) in cases.iter().enumerate() {
            if let Some(id) = &c.seed_norm_id {
                per_norm_index.entry(id.clone()).or_default().push(i);
            }
        }
        CaseSet { cases, per_norm_index }
    }

    pub fn from_jsonl(text: &str) -> Result<CaseSet, String> {
        read_cases(text).map(CaseSet::from_cases)
    }
}

/// Parses case JSONL, skipping blank lines.
pub fn read_cases(text: &str) -> Result<Vec<Case>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", n + 1)))
        .collect()
}

/// The case-generation prompt for one seed. The seed must carry a polarity.
pub fn build_generation_prompt(seed: &Norm, law: &LawProfile) -> String {
    let text = &seed.full_text;
    let id = &seed.leaf_id;
    let ty = seed.polarity.map(|p| p.as_str()).unwrap_or("Other");
    let title = &law.title;
    let name = &law.name;
    let example = &law.id_example;
    format!(
        r#"Now you are a legal expert on {title} that answers questions as simply as possible.

Read the regulation: {text}.
The regulation type is: {ty}.

Q1. Create a legal case only related to regulation {id} and the type {ty}.
The case must be a detailed story in plain text, spanning between 200 to 500 words, closely related to the regulation {id}.
The story must include the following seven characteristics about the flow of private information: [Sender, Sender Role, Recipient, Recipient Role, Subject, Subject Role, Type].

The "Sender" and "Recipient" fields indicate the sender and recipient of the message.
The "Sender Role" and "Recipient Role" fields indicate the role of the sender and recipient (e.g., doctor, patient).
The "Subject" and "Subject Role" field identifies the subject whose personal health information is contained in the message and the role of the subject.
The "Type" field defines what kind of information would be passed, such as name or location.
Integrate these seven characteristics seamlessly into the story without explicitly listing them.

Except for the seven characteristics, you can add the four optional characteristics [Purpose, In Reply To, Consented By, Belief] if mentioned in the regulation {id} or necessary.
The "Purpose" field indicates a reason the message is being sent, such as for medical treatment.
The "In Reply To" field was added to describe a disclosure where the message is sent as a response to some earlier message.
The "Consented By" field indicates which people have consented to the message disclosure.
The "Belief" field contains a collection of assertions about the current situation, such as whether this is a medical emergency, or whether the disclosure is (in the opinion of the sender) in the best interest of the health of the patient.
Integrate these four characteristics seamlessly into the story without explicitly listing them.

Q2: Based on the background created in Q3, list the eleven characteristics regarding the flow of private information (Mark as "None" if not exist)

Q3: Please retrieve all the specific {name} regulation IDs that are the permission or prohibition description of the case. Please be as specific as possible to the sub-section id (e.g., {example}).

Q4: Please classify the relation between the case and the regulation {id} as one of the following: "Permit", "Forbid", "Not Applicable".

Q5: Please classify the relation between the case and the {title} as one of the following: "Permit", "Forbid", "Not Applicable"."#
    )
}

static BACKGROUND_LABEL: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)^[\s*]*(?:case\s+)?(?:background|story)[\s*]*:[\s*]*").unwrap());

pub(crate) fn strip_background_label(text: &str) -> String {
    BACKGROUND_LABEL.replace(text.trim(), "").trim().to_string()
}

/// Maps a statute-level relation onto applicability.
pub fn applicability_of(v: Verdict) -> Applicability {
    match v {
        Verdict::NotApplicable => Applicability::NotApplicable,
        Verdict::Permit | Verdict::Forbid => Applicability::Applicable,
    }
}

/// Reads one sampled generation answer. Q1 is the background, Q2 the
/// features, Q3 the cited ids, Q4 the relation to the seed and Q5 the
/// relation to the statute as a whole.
pub fn parse_case_response(raw: &str, seed: &Norm) -> Result<Case, ParseError> {
    let answers = split_questions(raw);
    let background = answers.get(&1).map(|b| strip_background_label(b)).unwrap_or_default();
    if background.split_whitespace().next().is_none() {
        return Err(ParseError::UnparseableResponse("no background (Q1) section".into()));
    }
    let features = answers.get(&2).map(|t| FlowFeatures::parse(t)).unwrap_or_default();
    let cited_norm_ids = answers.get(&3).map(|t| NormId::find_all(t)).unwrap_or_default();
    let comp_conclusion = answers.get(&4).and_then(|t| Verdict::find_first(t));
    let appl_conclusion = answers.get(&5).and_then(|t| Verdict::find_first(t)).map(applicability_of);
    Ok(Case {
        background,
        features,
        cited_norm_ids,
        appl_conclusion,
        comp_conclusion,
        seed_norm_id: seed.norm_id().cloned(),
        provenance: Provenance::Synthetic,
        raw_response: raw.to_string(),
    })
}

/// All seven vital features present and not a `None` sentinel.
pub fn feature_filter(case: &Case) -> bool {
    case.features.has_vital_features()
}

/// The seed's exact leaf id is among the cited ids; citing an ancestor does
/// not count.
pub fn norm_match(case: &Case, seed: &Norm) -> bool {
    seed.norm_id().is_some_and(|id| case.cited_norm_ids.contains(id))
}

/// Applicable, and the compliance conclusion equals the seed polarity.
pub fn conclusion_match(case: &Case, seed: &Norm) -> bool {
    case.appl_conclusion == Some(Applicability::Applicable)
        && seed.polarity.is_some_and(|p| case.comp_conclusion == Some(Verdict::from(p)))
}

pub fn consistency_filter(case: &Case, seed: &Norm) -> bool {
    norm_match(case, seed) && conclusion_match(case, seed)
}
