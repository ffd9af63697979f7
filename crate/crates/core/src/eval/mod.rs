//! Instruction examples for tuning, judgment parsing, and scoring.

mod metrics;

use std::collections::BTreeMap;
use std::fmt;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::EvalError;
use crate::forge::Case;
use crate::labels::{Applicability, Verdict};
use crate::norm_id::NormId;
use crate::qa::FlowFeatures;
use crate::statute::Norm;
use crate::LawProfile;

pub use metrics::{
    align_transcripts, compare_reports, macro_f1, round_half_up, score, ClassMetrics, ConfusionCell, DeltaMode, DeltaRow, DeltaTable,
    EvalReport, RetrievalMode, ScoreOptions, TranscriptRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Applicability,
    Compliance,
    Recitation,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Applicability => "applicability",
            Task::Compliance => "compliance",
            Task::Recitation => "recitation",
        }
    }

    /// The two labels scored for a classification task, in table order.
    pub fn labels(self) -> [Conclusion; 2] {
        match self {
            Task::Compliance => [Conclusion::Permit, Conclusion::Forbid],
            _ => [Conclusion::Applicable, Conclusion::NotApplicable],
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "applicability" => Ok(Task::Applicability),
            "compliance" => Ok(Task::Compliance),
            "recitation" => Ok(Task::Recitation),
            _ => Err(format!("unknown task `{s}` (applicability, compliance, recitation)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Vanilla,
    MultiStep,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "vanilla" => Ok(Mode::Vanilla),
            "multi-step" | "multistep" => Ok(Mode::MultiStep),
            _ => Err(format!("unknown mode `{s}` (vanilla, multi-step)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionExample {
    pub instruction: String,
    #[serde(default)]
    pub input: Option<String>,
    pub response: String,
    pub task: Task,
    pub mode: Mode,
}

/// One line of a tuning file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
}

impl InstructionExample {
    pub fn to_training_record(&self) -> TrainingRecord {
        TrainingRecord {
            instruction: self.instruction.clone(),
            input: self.input.clone().unwrap_or_default(),
            output: self.response.clone(),
        }
    }
}

pub fn training_jsonl(examples: &[InstructionExample]) -> String {
    examples
        .iter()
        .map(|e| serde_json::to_string(&e.to_training_record()).expect("record serializes") + "\n")
        .collect()
}

const WITH_INPUT: &str = "Below is an instruction that describes a task, paired with an input that provides further context. Write a response that appropriately completes the request.\n\n### Instruction:\n{instruction}\n\n### Input:\n{input}\n\n### Response:";
const WITHOUT_INPUT: &str = "Below is an instruction that describes a task. Write a response that appropriately completes the request.\n\n### Instruction:\n{instruction}\n\n### Response:";

/// The tuning prompt for an example, without its response.
pub fn render_prompt(ex: &InstructionExample) -> String {
    // split on the placeholders rather than `replace` so text inside the
    // substituted values is never itself substituted
    let fill = |template: &str, pairs: &[(&str, &str)]| {
        let mut out = String::new();
        let mut rest = template;
        for (key, value) in pairs {
            let (head, tail) = rest.split_once(key).expect("placeholder present");
            out.push_str(head);
            out.push_str(value);
            rest = tail;
        }
        out.push_str(rest);
        out
    };
    match ex.input.as_deref().filter(|i| !i.is_empty()) {
        Some(input) => fill(WITH_INPUT, &[("{instruction}", &ex.instruction), ("{input}", input)]),
        None => fill(WITHOUT_INPUT, &[("{instruction}", &ex.instruction)]),
    }
}

/// Norm id to recitable content.
pub type NormLookup = BTreeMap<NormId, String>;

/// The text of a norm's path from its section heading down, on one line.
/// Part and subpart headings are left out.
pub fn norm_content(norm: &Norm) -> String {
    norm.segments()
        .into_iter()
        .filter(|(id, text)| id.parse::<NormId>().is_ok() && !text.is_empty())
        .map(|(_, text)| text)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Content for every section id on any norm's path, internal ones included,
/// since real cases often cite a paragraph above the leaves.
pub fn norm_lookup(norms: &[Norm]) -> NormLookup {
    let mut out = NormLookup::new();
    for norm in norms {
        let mut texts: Vec<&str> = Vec::new();
        for (id, text) in norm.segments() {
            let Ok(id) = id.parse::<NormId>() else { continue };
            if !text.is_empty() {
                texts.push(text);
            }
            out.entry(id).or_insert_with(|| texts.join(" "));
        }
    }
    out
}

/// The norm a case is about: its seed, or for real cases the first cited id.
pub fn gold_norm(case: &Case) -> Option<&NormId> {
    case.seed_norm_id.as_ref().or_else(|| case.cited_norm_ids.first())
}

fn with_period(text: &str) -> String {
    let t = text.trim_end();
    if t.ends_with(['.', '?', '!']) {
        t.to_string()
    } else {
        format!("{t}.")
    }
}

fn appl_word(a: Applicability) -> &'static str {
    match a {
        Applicability::Applicable => "Applicable",
        Applicability::NotApplicable => "Not applicable",
    }
}

pub fn recitation_example(id: &NormId, content: &str, law: &LawProfile) -> InstructionExample {
    InstructionExample {
        instruction: format!("Please recite the contents of {id} in the {}.", law.title),
        input: None,
        response: with_period(content),
        task: Task::Recitation,
        mode: Mode::Vanilla,
    }
}

/// Renders a case as a tuning example. Recitation uses the case's gold norm.
pub fn compile_example(
    case: &Case,
    task: Task,
    mode: Mode,
    lookup: &NormLookup,
    law: &LawProfile,
) -> Result<InstructionExample, EvalError> {
    let title = &law.title;
    let background = case.background.trim();
    let lookup_norm = || -> Result<(&NormId, &String), EvalError> {
        let id = gold_norm(case).ok_or_else(|| EvalError::MissingNorm("<none>".into()))?;
        lookup.get(id).map(|c| (id, c)).ok_or_else(|| EvalError::MissingNorm(id.to_string()))
    };
    let (instruction, input, response) = match (task, mode) {
        (Task::Recitation, _) => {
            let (id, content) = lookup_norm()?;
            return Ok(recitation_example(id, content, law));
        }
        (Task::Applicability, mode) => {
            let label = appl_word(case.appl_conclusion.ok_or(EvalError::MissingLabel("applicability"))?);
            match mode {
                Mode::Vanilla => (
                    format!("Please determine whether the {title} is applicable to the case."),
                    format!("Read the case background: {}", with_period(background)),
                    label.to_string(),
                ),
                Mode::MultiStep => (
                    format!(
                        "Please assess the applicability of the {title} to the case through the following steps: \
                         Step 1: Annotate the message characteristics [Sender, Sender Role, Recipient, Recipient Role, \
                         Subject, Subject Role, Type] about the flow of private information in the case as a list. \
                         Step 2: Determine whether the {title} is applicable to the case."
                    ),
                    format!("Read the case background: {}", with_period(background)),
                    format!("Step 1: {}\nStep 2: {label}.", case.features.render(7)),
                ),
            }
        }
        (Task::Compliance, mode) => {
            let label = match case.comp_conclusion {
                Some(v @ (Verdict::Permit | Verdict::Forbid)) => v.as_str(),
                _ => return Err(EvalError::MissingLabel("compliance")),
            };
            match mode {
                Mode::Vanilla => (
                    format!("Please determine whether the {title} permits or forbids the case."),
                    format!("Read the case background: {}", with_period(background)),
                    label.to_string(),
                ),
                Mode::MultiStep => {
                    let (id, content) = lookup_norm()?;
                    (
                        format!(
                            "Please assess the case for compliance with the {title} through the following steps: \
                             Step 1: Annotate the eleven message characteristics [Sender, Sender Role, Recipient, \
                             Recipient Role, Subject, Subject Role, Type, Purpose, In Reply To, Consented By, Belief] \
                             about the flow of private information in the case as a list. Step 2: Identify and list all \
                             applicable {} regulation IDs (e.g., {}) and their content. Step 3: Determine whether the \
                             {title} permits or forbids the case.",
                            law.name, law.id_example
                        ),
                        format!("Read the case background: {background}"),
                        format!(
                            "Step 1: {}\nStep 2: {id}, {}\nStep 3: {label}.",
                            case.features.render(11),
                            with_period(content)
                        ),
                    )
                }
            }
        }
    };
    Ok(InstructionExample { instruction, input: Some(input), response, task, mode })
}

/// A model's decision, including failure to produce one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Conclusion {
    Applicable,
    #[serde(rename = "Not Applicable")]
    NotApplicable,
    Permit,
    Forbid,
    Unknown,
}

impl Conclusion {
    pub fn as_str(self) -> &'static str {
        match self {
            Conclusion::Applicable => "Applicable",
            Conclusion::NotApplicable => "Not Applicable",
            Conclusion::Permit => "Permit",
            Conclusion::Forbid => "Forbid",
            Conclusion::Unknown => "Unknown",
        }
    }

    /// The gold label of a case for a classification task.
    pub fn gold(case: &Case, task: Task) -> Option<Conclusion> {
        match task {
            Task::Compliance => match case.comp_conclusion {
                Some(Verdict::Permit) => Some(Conclusion::Permit),
                Some(Verdict::Forbid) => Some(Conclusion::Forbid),
                _ => None,
            },
            _ => case.appl_conclusion.map(|a| match a {
                Applicability::Applicable => Conclusion::Applicable,
                Applicability::NotApplicable => Conclusion::NotApplicable,
            }),
        }
    }
}

impl fmt::Display for Conclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub features: Option<FlowFeatures>,
    pub norm_ids: Vec<NormId>,
    pub conclusion: Conclusion,
}

static STEP: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?im)^[\s*#>-]*step\s*(\d+)\s*\**\s*[:.)]").unwrap());
static APPL_LABEL: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)\b(not[\s-]+applicable|inapplicable|applicable)\b").unwrap());
static COMP_LABEL: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)\b(permit(?:s|ted)?|forbid(?:s|den)?)\b").unwrap());

fn first_label(text: &str, task: Task) -> Conclusion {
    match task {
        Task::Compliance => COMP_LABEL.find(text).map(|m| {
            if m.as_str().to_lowercase().starts_with("permit") {
                Conclusion::Permit
            } else {
                Conclusion::Forbid
            }
        }),
        _ => APPL_LABEL.find(text).map(|m| {
            if m.as_str().eq_ignore_ascii_case("applicable") {
                Conclusion::Applicable
            } else {
                Conclusion::NotApplicable
            }
        }),
    }
    .unwrap_or(Conclusion::Unknown)
}

/// `(step number, text)` in transcript order.
fn steps(transcript: &str) -> Vec<(u32, &str)> {
    let marks: Vec<(usize, usize, u32)> = STEP
        .captures_iter(transcript)
        .map(|c| {
            let m = c.get(0).unwrap();
            (m.start(), m.end(), c[1].parse().unwrap_or(0))
        })
        .collect();
    marks
        .iter()
        .enumerate()
        .map(|(i, &(_, end, n))| {
            let stop = marks.get(i + 1).map(|m| m.0).unwrap_or(transcript.len());
            (n, transcript[end..stop].trim())
        })
        .collect()
}

/// Never fails: a transcript with no recognizable label gives `Unknown`.
pub fn parse_judgment(transcript: &str, task: Task, mode: Mode) -> Judgment {
    let mut j = Judgment { features: None, norm_ids: vec![], conclusion: Conclusion::Unknown };
    if mode == Mode::Vanilla {
        j.conclusion = first_label(transcript, task);
        return j;
    }
    let steps = steps(transcript);
    let Some(&(last_n, last_text)) = steps.last() else {
        j.conclusion = first_label(transcript, task);
        return j;
    };
    if steps.len() > 1 || last_n != 1 {
        j.conclusion = first_label(last_text, task);
    }
    if let Some((_, text)) = steps.iter().find(|(n, _)| *n == 1) {
        j.features = Some(FlowFeatures::parse(text));
    }
    if task == Task::Compliance {
        if let Some((_, text)) = steps.iter().find(|(n, _)| *n == 2) {
            j.norm_ids = NormId::find_all(text);
        }
    }
    j
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::forge::Provenance;

    pub(crate) fn permit_case() -> Case {
        Case {
            background: "Jane, a nurse, sent records of affected patients to Tom at the health department.".into(),
            features: FlowFeatures::parse(
                "Sender: Jane, Sender Role: Nurse, Recipient: Tom, Recipient Role: Health department official, \
                 Subject: Affected patients, Subject Role: Patients, Type: Protected health information, \
                 Purpose: Report misconduct, Belief: Disclosure is necessary",
            ),
            cited_norm_ids: vec!["164.502(j)(1)(i)".parse().unwrap()],
            appl_conclusion: Some(Applicability::Applicable),
            comp_conclusion: Some(Verdict::Permit),
            seed_norm_id: Some("164.502(j)(1)(i)".parse().unwrap()),
            provenance: Provenance::Synthetic,
            raw_response: String::new(),
        }
    }

    fn lookup() -> NormLookup {
        BTreeMap::from([(
            "164.502(j)(1)(i)".parse().unwrap(),
            "Uses and disclosures by whistleblowers. A covered entity is not considered to have violated the requirements".to_string(),
        )])
    }

    #[test]
    fn vanilla_responses_are_bare_labels() {
        let law = LawProfile::default();
        let c = permit_case();
        let ex = compile_example(&c, Task::Applicability, Mode::Vanilla, &lookup(), &law).unwrap();
        assert_eq!(ex.response, "Applicable");
        assert_eq!(ex.instruction, "Please determine whether the HIPAA Privacy Rule is applicable to the case.");
        assert_eq!(ex.input.as_deref(), Some(format!("Read the case background: {}", c.background).as_str()));
        let ex = compile_example(&c, Task::Compliance, Mode::Vanilla, &lookup(), &law).unwrap();
        assert_eq!(ex.response, "Permit");
        let mut na = c.clone();
        na.appl_conclusion = Some(Applicability::NotApplicable);
        let ex = compile_example(&na, Task::Applicability, Mode::Vanilla, &lookup(), &law).unwrap();
        assert_eq!(ex.response, "Not applicable");
    }

    #[test]
    fn multi_step_compliance_lists_the_norm() {
        let ex = compile_example(&permit_case(), Task::Compliance, Mode::MultiStep, &lookup(), &LawProfile::default()).unwrap();
        let lines: Vec<&str> = ex.response.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("Step 1: Sender: Jane, Sender Role: Nurse, "));
        assert!(lines[0].ends_with("In Reply To: None, Consented By: None, Belief: Disclosure is necessary"));
        assert_eq!(lines[1], "Step 2: 164.502(j)(1)(i), Uses and disclosures by whistleblowers. A covered entity is not considered to have violated the requirements.");
        assert_eq!(lines[2], "Step 3: Permit.");
        assert!(ex.instruction.contains("regulation IDs (e.g., 164.xxx) and their content. Step 3:"));
        assert!(!ex.input.unwrap().ends_with(".."));
    }

    #[test]
    fn multi_step_applicability_has_seven_features() {
        let ex = compile_example(&permit_case(), Task::Applicability, Mode::MultiStep, &lookup(), &LawProfile::default()).unwrap();
        assert!(ex.response.ends_with("Type: Protected health information\nStep 2: Applicable."));
        assert!(!ex.response.contains("Purpose"));
    }

    #[test]
    fn missing_norm_is_an_error() {
        let err = compile_example(&permit_case(), Task::Compliance, Mode::MultiStep, &BTreeMap::new(), &LawProfile::default());
        assert_eq!(err.unwrap_err(), EvalError::MissingNorm("164.502(j)(1)(i)".into()));
        let ok = compile_example(&permit_case(), Task::Compliance, Mode::Vanilla, &BTreeMap::new(), &LawProfile::default());
        assert!(ok.is_ok());
    }

    #[test]
    fn recitation() {
        let ex = compile_example(&permit_case(), Task::Recitation, Mode::Vanilla, &lookup(), &LawProfile::default()).unwrap();
        assert_eq!(ex.instruction, "Please recite the contents of 164.502(j)(1)(i) in the HIPAA Privacy Rule.");
        assert!(ex.response.ends_with("requirements."));
        assert_eq!(ex.input, None);
        assert!(!render_prompt(&ex).contains("### Input:"));
    }

    #[test]
    fn prompt_templates() {
        let ex = InstructionExample {
            instruction: "do {input}".into(),
            input: Some("x".into()),
            response: String::new(),
            task: Task::Applicability,
            mode: Mode::Vanilla,
        };
        let p = render_prompt(&ex);
        assert_eq!(
            p,
            "Below is an instruction that describes a task, paired with an input that provides further context. \
             Write a response that appropriately completes the request.\n\n### Instruction:\ndo {input}\n\n### Input:\nx\n\n### Response:"
        );
        let empty = InstructionExample { input: Some(String::new()), ..ex };
        assert!(render_prompt(&empty).ends_with("### Instruction:\ndo {input}\n\n### Response:"));
    }

    #[test]
    fn parses_judgments() {
        let p = |t, task, mode| parse_judgment(t, task, mode).conclusion;
        assert_eq!(p("Step 1: Sender: A\nStep 2: Applicable", Task::Applicability, Mode::MultiStep), Conclusion::Applicable);
        assert_eq!(p("Step 1: x\nStep 2: y\nStep 3: Forbid.", Task::Compliance, Mode::MultiStep), Conclusion::Forbid);
        assert_eq!(p("I cannot decide.", Task::Compliance, Mode::Vanilla), Conclusion::Unknown);
        assert_eq!(p("I cannot decide.", Task::Applicability, Mode::MultiStep), Conclusion::Unknown);
        assert_eq!(p("The rule is not applicable here.", Task::Applicability, Mode::Vanilla), Conclusion::NotApplicable);
        assert_eq!(p("Answer: it is permitted", Task::Compliance, Mode::Vanilla), Conclusion::Permit);
        // only step 1: nothing decides
        assert_eq!(p("Step 1: Type: Applicable data", Task::Applicability, Mode::MultiStep), Conclusion::Unknown);
    }

    #[test]
    fn compiled_responses_parse_back() {
        let c = permit_case();
        let law = LawProfile::default();
        for task in [Task::Applicability, Task::Compliance] {
            for mode in [Mode::Vanilla, Mode::MultiStep] {
                let ex = compile_example(&c, task, mode, &lookup(), &law).unwrap();
                let j = parse_judgment(&ex.response, task, mode);
                assert_eq!(Some(j.conclusion), Conclusion::gold(&c, task), "{task:?} {mode:?}");
                if mode == Mode::MultiStep {
                    let n = if task == Task::Compliance { 11 } else { 7 };
                    assert_eq!(j.features.unwrap().fields()[..n], c.features.fields()[..n]);
                }
                if (task, mode) == (Task::Compliance, Mode::MultiStep) {
                    assert_eq!(j.norm_ids, c.cited_norm_ids);
                }
            }
        }
    }
}
