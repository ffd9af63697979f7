//! Contextual-integrity flows, norm predicates and the legality check.
//!
//! A flow is legal under a predicate when every party sits in the required
//! role, the information type matches and each transmission-principle
//! constraint holds; the predicate's effect is then returned.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::FlowError;
use crate::labels::Polarity;
use crate::norm_id::NormId;
use crate::qa::{is_sentinel, FlowFeatures};

pub use crate::labels::Verdict as FlowVerdict;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmissionPrinciples {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purpose: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_reply_to: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consented_by: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub belief: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InformationFlow {
    sender: String,
    sender_role: String,
    recipient: String,
    recipient_role: String,
    subject: String,
    subject_role: String,
    info_type: String,
    principles: TransmissionPrinciples,
}

fn required(name: &'static str, value: Option<&str>) -> Result<String, FlowError> {
    match value {
        Some(v) if !is_sentinel(v) => Ok(v.trim().to_string()),
        _ => Err(FlowError::MissingField(name)),
    }
}

fn optional(value: Option<&str>) -> Option<String> {
    value.filter(|v| !is_sentinel(v)).map(|v| v.trim().to_string())
}

/// Splits `A, B and C` into party names.
pub fn split_parties(text: &str) -> Vec<String> {
    text.split([',', ';'])
        .flat_map(|chunk| chunk.split(" and "))
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::to_string)
        .collect()
}

impl InformationFlow {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sender: &str,
        sender_role: &str,
        recipient: &str,
        recipient_role: &str,
        subject: &str,
        subject_role: &str,
        info_type: &str,
        principles: TransmissionPrinciples,
    ) -> Result<Self, FlowError> {
        Ok(InformationFlow {
            sender: required("sender", Some(sender))?,
            sender_role: required("sender_role", Some(sender_role))?,
            recipient: required("recipient", Some(recipient))?,
            recipient_role: required("recipient_role", Some(recipient_role))?,
            subject: required("subject", Some(subject))?,
            subject_role: required("subject_role", Some(subject_role))?,
            info_type: required("type", Some(info_type))?,
            principles,
        })
    }

    /// Builds a flow from extracted features; fails on the first missing
    /// mandatory feature.
    pub fn from_features(f: &FlowFeatures) -> Result<Self, FlowError> {
        let principles = TransmissionPrinciples {
            purpose: optional(f.purpose.as_deref()),
            in_reply_to: optional(f.in_reply_to.as_deref()),
            consented_by: optional(f.consented_by.as_deref()).map(|c| split_parties(&c)),
            belief: optional(f.belief.as_deref()),
        };
        Ok(InformationFlow {
            sender: required("sender", f.sender.as_deref())?,
            sender_role: required("sender_role", f.sender_role.as_deref())?,
            recipient: required("recipient", f.recipient.as_deref())?,
            recipient_role: required("recipient_role", f.recipient_role.as_deref())?,
            subject: required("subject", f.subject.as_deref())?,
            subject_role: required("subject_role", f.subject_role.as_deref())?,
            info_type: required("type", f.info_type.as_deref())?,
            principles,
        })
    }

    pub fn to_features(&self) -> FlowFeatures {
        FlowFeatures {
            sender: Some(self.sender.clone()),
            sender_role: Some(self.sender_role.clone()),
            recipient: Some(self.recipient.clone()),
            recipient_role: Some(self.recipient_role.clone()),
            subject: Some(self.subject.clone()),
            subject_role: Some(self.subject_role.clone()),
            info_type: Some(self.info_type.clone()),
            purpose: self.principles.purpose.clone(),
            in_reply_to: self.principles.in_reply_to.clone(),
            consented_by: self.principles.consented_by.as_ref().map(|c| c.join(", ")),
            belief: self.principles.belief.clone(),
        }
    }

    pub fn sender(&self) -> &str {
        &self.sender
    }
    pub fn sender_role(&self) -> &str {
        &self.sender_role
    }
    pub fn recipient(&self) -> &str {
        &self.recipient
    }
    pub fn recipient_role(&self) -> &str {
        &self.recipient_role
    }
    pub fn subject(&self) -> &str {
        &self.subject
    }
    pub fn subject_role(&self) -> &str {
        &self.subject_role
    }
    pub fn info_type(&self) -> &str {
        &self.info_type
    }
    pub fn principles(&self) -> &TransmissionPrinciples {
        &self.principles
    }
}

impl<'de> Deserialize<'de> for InformationFlow {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            sender: String,
            sender_role: String,
            recipient: String,
            recipient_role: String,
            subject: String,
            subject_role: String,
            info_type: String,
            #[serde(default)]
            principles: TransmissionPrinciples,
        }
        let r = Raw::deserialize(d)?;
        InformationFlow::new(
            &r.sender,
            &r.sender_role,
            &r.recipient,
            &r.recipient_role,
            &r.subject,
            &r.subject_role,
            &r.info_type,
            r.principles,
        )
        .map_err(serde::de::Error::custom)
    }
}

/// Lowercase, trim, collapse whitespace, drop a leading article and
/// trailing punctuation.
fn normalize_text(raw: &str) -> String {
    let lower = raw.to_lowercase();
    let trimmed = lower.trim_end_matches(|c: char| c.is_whitespace() || matches!(c, '.' | ',' | ';' | ':'));
    let mut words: Vec<&str> = trimmed.split_whitespace().collect();
    while words.len() > 1 && matches!(words[0], "a" | "an" | "the") {
        words.remove(0);
    }
    words.join(" ")
}

/// Role alias table, loaded from JSON `{"aliases": {"physician": "doctor"}}`.
/// Chains are resolved at load so normalization is idempotent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoleLexicon {
    aliases: BTreeMap<String, String>,
}

impl RoleLexicon {
    pub fn new<I, K, V>(pairs: I) -> Result<Self, FlowError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let raw: BTreeMap<String, String> = pairs
            .into_iter()
            .map(|(k, v)| (normalize_text(k.as_ref()), normalize_text(v.as_ref())))
            .filter(|(k, v)| k != v)
            .collect();
        let mut aliases = BTreeMap::new();
        for key in raw.keys() {
            let mut seen = BTreeSet::from([key.clone()]);
            let mut target = &raw[key];
            while let Some(next) = raw.get(target) {
                if !seen.insert(target.clone()) {
                    return Err(FlowError::AliasCycle(key.clone()));
                }
                target = next;
            }
            aliases.insert(key.clone(), target.clone());
        }
        Ok(RoleLexicon { aliases })
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        #[derive(Deserialize)]
        struct File {
            aliases: BTreeMap<String, String>,
        }
        let file: File = serde_json::from_str(text).map_err(|e| e.to_string())?;
        RoleLexicon::new(file.aliases).map_err(|e| e.to_string())
    }

    pub fn len(&self) -> usize {
        self.aliases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aliases.is_empty()
    }
}

pub fn normalize_role(raw: &str, roles: &RoleLexicon) -> String {
    let norm = normalize_text(raw);
    roles.aliases.get(&norm).cloned().unwrap_or(norm)
}

/// Either any value (`"*"`) or one of a listed set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RoleSet {
    Any,
    Of(BTreeSet<String>),
}

impl RoleSet {
    pub fn of<I: IntoIterator<Item = S>, S: Into<String>>(items: I) -> Self {
        let set: BTreeSet<String> = items.into_iter().map(Into::into).collect();
        if set.contains("*") {
            RoleSet::Any
        } else {
            RoleSet::Of(set)
        }
    }

    fn is_empty(&self) -> bool {
        matches!(self, RoleSet::Of(s) if s.is_empty())
    }
}

impl Serialize for RoleSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            RoleSet::Any => s.serialize_str("*"),
            RoleSet::Of(set) => set.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for RoleSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            One(String),
            Many(Vec<String>),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::One(s) => RoleSet::of([s]),
            Raw::Many(v) => RoleSet::of(v),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Principle {
    Purpose,
    InReplyTo,
    ConsentedBy,
    Belief,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum Requirement {
    Exact(String),
    Contains(String),
    Present,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrincipleConstraint {
    pub principle: Principle,
    #[serde(flatten)]
    pub requirement: Requirement,
}

impl PrincipleConstraint {
    pub fn holds(&self, p: &TransmissionPrinciples) -> bool {
        let values: Vec<&str> = match self.principle {
            Principle::Purpose => p.purpose.iter().map(String::as_str).collect(),
            Principle::InReplyTo => p.in_reply_to.iter().map(String::as_str).collect(),
            Principle::Belief => p.belief.iter().map(String::as_str).collect(),
            Principle::ConsentedBy => p.consented_by.iter().flatten().map(String::as_str).collect(),
        };
        match &self.requirement {
            Requirement::Present => !values.is_empty(),
            Requirement::Exact(want) => {
                let want = normalize_text(want);
                values.iter().any(|v| normalize_text(v) == want)
            }
            Requirement::Contains(want) => {
                let want = normalize_text(want);
                values.iter().any(|v| normalize_text(v).contains(&want))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormPredicate {
    pub norm_id: NormId,
    pub effect: Polarity,
    pub sender_roles: RoleSet,
    pub recipient_roles: RoleSet,
    pub subject_roles: RoleSet,
    pub info_types: RoleSet,
    #[serde(default)]
    pub principle_constraints: Vec<PrincipleConstraint>,
}

impl NormPredicate {
    pub fn validate(&self) -> Result<(), FlowError> {
        let sets = [
            ("sender_roles", &self.sender_roles),
            ("recipient_roles", &self.recipient_roles),
            ("subject_roles", &self.subject_roles),
            ("info_types", &self.info_types),
        ];
        for (name, set) in sets {
            if set.is_empty() {
                return Err(FlowError::InvalidPredicate {
                    norm: self.norm_id.to_string(),
                    message: format!("{name} is empty; use \"*\" for any"),
                });
            }
        }
        Ok(())
    }
}

/// Reads a JSON array of predicates and validates each one.
pub fn load_predicates(text: &str) -> Result<Vec<NormPredicate>, String> {
    let preds: Vec<NormPredicate> = serde_json::from_str(text).map_err(|e| e.to_string())?;
    for p in &preds {
        p.validate().map_err(|e| e.to_string())?;
    }
    Ok(preds)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TypeMatch {
    /// Either side's tokens are a subset of the other's.
    #[default]
    TokenSubset,
    Exact,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CheckOptions {
    pub type_match: TypeMatch,
}

fn tokens(text: &str) -> BTreeSet<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn in_role(role: &str, allowed: &RoleSet, roles: &RoleLexicon) -> bool {
    match allowed {
        RoleSet::Any => true,
        RoleSet::Of(set) => {
            let role = normalize_role(role, roles);
            set.iter().any(|r| normalize_role(r, roles) == role)
        }
    }
}

fn type_matches(info_type: &str, allowed: &RoleSet, how: TypeMatch) -> bool {
    let RoleSet::Of(set) = allowed else { return true };
    match how {
        TypeMatch::Exact => {
            let t = normalize_text(info_type);
            set.iter().any(|s| normalize_text(s) == t)
        }
        TypeMatch::TokenSubset => {
            let t = tokens(info_type);
            set.iter().map(|s| tokens(s)).filter(|s| !s.is_empty()).any(|s| s.is_subset(&t) || (!t.is_empty() && t.is_subset(&s)))
        }
    }
}

pub fn check_flow(flow: &InformationFlow, pred: &NormPredicate, roles: &RoleLexicon) -> FlowVerdict {
    check_flow_with(flow, pred, roles, CheckOptions::default())
}

pub fn check_flow_with(flow: &InformationFlow, pred: &NormPredicate, roles: &RoleLexicon, opts: CheckOptions) -> FlowVerdict {
    let matched = in_role(&flow.sender_role, &pred.sender_roles, roles)
        && in_role(&flow.recipient_role, &pred.recipient_roles, roles)
        && in_role(&flow.subject_role, &pred.subject_roles, roles)
        && type_matches(&flow.info_type, &pred.info_types, opts.type_match)
        && pred.principle_constraints.iter().all(|c| c.holds(&flow.principles));
    if matched {
        pred.effect.into()
    } else {
        FlowVerdict::NotApplicable
    }
}

/// Forbid beats Permit beats NotApplicable.
pub fn aggregate_verdicts<I: IntoIterator<Item = FlowVerdict>>(verdicts: I) -> FlowVerdict {
    let mut out = FlowVerdict::NotApplicable;
    for v in verdicts {
        match v {
            FlowVerdict::Forbid => return FlowVerdict::Forbid,
            FlowVerdict::Permit => out = FlowVerdict::Permit,
            FlowVerdict::NotApplicable => {}
        }
    }
    out
}

/// Checks a flow against every predicate and aggregates the verdicts.
pub fn judge_flow(flow: &InformationFlow, preds: &[NormPredicate], roles: &RoleLexicon) -> FlowVerdict {
    aggregate_verdicts(preds.iter().map(|p| check_flow(flow, p, roles)))
}
