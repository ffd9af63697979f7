use std::collections::{BTreeMap, BTreeSet};

use once_cell::sync::Lazy;
use regex::Regex;
use serde::Serialize;

use super::{NodeId, Norm, NormType};
use crate::error::GatewayError;
use crate::gateway::{ChatRequest, ModelGateway};
use crate::labels::Polarity;
use crate::qa::{is_sentinel, split_questions};
use crate::LawProfile;

#[derive(Debug, Clone)]
pub struct ClassifyOptions {
    pub law: LawProfile,
    /// Extra samples drawn (in one resample call) when the first answer is unparseable.
    pub retry_budget: u32,
    pub max_tokens: u32,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self { law: LawProfile::default(), retry_budget: 2, max_tokens: 1024 }
    }
}

/// The norm-type classification prompt with the norm text substituted.
pub fn classification_prompt(law: &LawProfile, norm_text: &str) -> String {
    let title = &law.title;
    format!(
        r#"Now you are a legal expert on {title} that answers questions as simply as possible.
Please read the following regulation {norm_text}, and finish the following task.

Q1: (Classification) Classify the regulation type of the following regulation. The regulation type is one of the following: "Definition", "Permit", "Forbid", "Exception", "Requirement", "Permit and Exception", "Forbid and Exception", "Permit and Requirement", "Forbid and Requirement", "Permit and Exception and Requirement", "Forbid and Exception and Requirement", "Other".
Definition: The regulation defines a term or characteristic.
Permit: The regulation permits certain actions regarding the flow of private information.
Forbid: The regulation forbids certain actions regarding the flow of private information.
Exception: The regulation defines an exception to a certain action about privacy information flow.
Requirement: The regulation defines a requirement for privacy information flow.
Other: The regulation is not in the above types.

Q2: If the regulation type is "Definition", please annotate the name of the term or characteristic defined in the regulation.

Q3: If the regulation type is "Definition", please annotate the definition of the term or characteristic defined in the regulation.

Q4: If the regulation type contains "Permit", please annotate the action permitted in the regulation.

Q5: If the regulation type contains "Forbid", please annotate the action forbidden in the regulation.

Q6: If the regulation type contains "Exception", please annotate the exception defined in the regulation.

Q7: If the regulation type contains "Requirement", please annotate the requirement defined in the regulation.

Q8: If the regulation type is "Other", please give your own classification of the regulation type."#
    )
}

static TYPE_WORD: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?i)\b(definition|permit|forbid|exception|requirement|other)s?\b").unwrap()
});

/// Types and payloads from a Q1–Q8 answer, or `None` when Q1 names no type.
pub fn parse_classification(text: &str) -> Option<(BTreeSet<NormType>, BTreeMap<NormType, String>)> {
    let answers = split_questions(text);
    let q1 = answers.get(&1)?;
    let types: BTreeSet<NormType> = TYPE_WORD
        .captures_iter(q1)
        .map(|c| match c[1].to_lowercase().as_str() {
            "definition" => NormType::Definition,
            "permit" => NormType::Permit,
            "forbid" => NormType::Forbid,
            "exception" => NormType::Exception,
            "requirement" => NormType::Requirement,
            _ => NormType::Other,
        })
        .collect();
    if types.is_empty() {
        return None;
    }
    let mut types = types;
    if types.len() > 1 {
        // "other" in running prose next to a real type is not a type
        types.remove(&NormType::Other);
    }

    let answer = |q: u32| answers.get(&q).map(|s| s.trim()).filter(|s| !is_sentinel(s));
    let mut payloads = BTreeMap::new();
    if types.contains(&NormType::Definition) {
        let text = match (answer(2), answer(3)) {
            (Some(term), Some(def)) => Some(format!("{term}: {def}")),
            (Some(only), None) | (None, Some(only)) => Some(only.to_string()),
            (None, None) => None,
        };
        if let Some(text) = text {
            payloads.insert(NormType::Definition, text);
        }
    }
    for (ty, q) in [
        (NormType::Permit, 4),
        (NormType::Forbid, 5),
        (NormType::Exception, 6),
        (NormType::Requirement, 7),
        (NormType::Other, 8),
    ] {
        if let (true, Some(text)) = (types.contains(&ty), answer(q)) {
            payloads.insert(ty, text.to_string());
        }
    }
    Some((types, payloads))
}

/// The first, deterministic classification call for a norm.
pub fn classification_request(norm: &Norm, opts: &ClassifyOptions) -> ChatRequest {
    ChatRequest::new(classification_prompt(&opts.law, &norm.full_text))
        .max_tokens(opts.max_tokens)
        .tag(format!("classify:{}", norm.leaf_id))
}

/// The retry after an unparseable answer: `retry_budget` samples at temperature 1.
pub fn classification_resample(norm: &Norm, opts: &ClassifyOptions) -> ChatRequest {
    ChatRequest::new(classification_prompt(&opts.law, &norm.full_text))
        .temperature(1.0)
        .samples(opts.retry_budget)
        .max_tokens(opts.max_tokens)
        .tag(format!("classify:{}:resample", norm.leaf_id))
}

fn classify_one(norm: &Norm, gateway: &ModelGateway, opts: &ClassifyOptions) -> Result<Norm, GatewayError> {
    let resp = gateway.complete(&classification_request(norm, opts))?;
    let mut parsed = resp.texts.iter().find_map(|t| parse_classification(t));

    if parsed.is_none() && opts.retry_budget > 0 {
        let resp = gateway.complete(&classification_resample(norm, opts))?;
        parsed = resp.texts.iter().find_map(|t| parse_classification(t));
    }

    let mut out = norm.clone();
    match parsed {
        Some((types, payloads)) => {
            out.types = types;
            out.type_payloads = payloads;
            out.classification_failed = false;
        }
        None => {
            out.types = BTreeSet::from([NormType::Other]);
            out.type_payloads = BTreeMap::new();
            out.classification_failed = true;
        }
    }
    Ok(out)
}

/// Labels each norm's types via the gateway, preserving input order.
/// Unparseable answers are resampled once with `retry_budget` samples, then
/// fall back to `Other` with `classification_failed` set.
pub fn classify_norms(
    norms: &[Norm],
    gateway: &ModelGateway,
    opts: &ClassifyOptions,
) -> Result<Vec<Norm>, GatewayError> {
    gateway.par_map(norms, |n| classify_one(n, gateway, opts)).into_iter().collect()
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SeedReport {
    pub seeds: Vec<Norm>,
    /// Typed both Permit and Forbid; excluded rather than guessed.
    pub conflicting: Vec<NodeId>,
    /// Permit/Forbid norms without a section id (a bare root).
    pub unaddressable: Vec<NodeId>,
}

/// Permit- and Forbid-typed norms, each tagged with its seed polarity.
pub fn seed_norms(norms: &[Norm]) -> SeedReport {
    let mut report = SeedReport::default();
    for norm in norms {
        let permit = norm.types.contains(&NormType::Permit);
        let forbid = norm.types.contains(&NormType::Forbid);
        let polarity = match (permit, forbid) {
            (true, true) => {
                report.conflicting.push(norm.leaf_id.clone());
                continue;
            }
            (true, false) => Polarity::Permit,
            (false, true) => Polarity::Forbid,
            (false, false) => continue,
        };
        if norm.norm_id().is_none() {
            report.unaddressable.push(norm.leaf_id.clone());
            continue;
        }
        let mut seed = norm.clone();
        seed.polarity = Some(polarity);
        report.seeds.push(seed);
    }
    report
}
