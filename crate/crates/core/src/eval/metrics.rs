use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{gold_norm, Conclusion, Judgment, Task};
use crate::error::EvalError;
use crate::forge::Case;

/// Formats `x` to two decimals, rounding ties away from zero. The value is
/// first printed to nine decimals so binary noise such as
/// `64.82499999999999` still rounds as the decimal `64.825`.
pub fn round_half_up(x: f64) -> String {
    let s = format!("{:.9}", x.abs());
    let (int, frac) = s.split_once('.').expect("fixed-point format");
    let mut cents: u64 = int.parse::<u64>().expect("integer part") * 100 + frac[..2].parse::<u64>().unwrap();
    if frac.as_bytes()[2] >= b'5' {
        cents += 1;
    }
    let sign = if x < 0.0 && cents > 0 { "-" } else { "" };
    format!("{sign}{}.{:02}", cents / 100, cents % 100)
}

fn rounded(x: f64) -> f64 {
    round_half_up(x).parse().unwrap()
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Unweighted mean of per-class F1 scores; 0 for no classes.
pub fn macro_f1(f1s: &[f64]) -> f64 {
    if f1s.is_empty() {
        0.0
    } else {
        f1s.iter().sum::<f64>() / f1s.len() as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetrievalMode {
    /// Gold norm is among the predicted ids.
    #[default]
    Containment,
    /// Predicted ids are exactly the gold norm.
    ExactSet,
    /// Some predicted id equals or encloses the gold norm.
    Prefix,
}

impl std::str::FromStr for RetrievalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "containment" => Ok(RetrievalMode::Containment),
            "exact-set" => Ok(RetrievalMode::ExactSet),
            "prefix" => Ok(RetrievalMode::Prefix),
            _ => Err(format!("unknown retrieval mode `{s}` (containment, exact-set, prefix)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreOptions {
    /// Score norm retrieval (compliance only).
    pub retrieval: Option<RetrievalMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: Conclusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCell {
    pub gold: Conclusion,
    pub predicted: Conclusion,
    pub count: usize,
}

/// Percentages are kept at full precision; [`EvalReport::to_table`] rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub total: usize,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_f1: f64,
    #[serde(default)]
    pub norm_retrieval_accuracy: Option<f64>,
    pub unknown: usize,
    pub confusion: Vec<ConfusionCell>,
}

impl EvalReport {
    /// Builds the report from `(gold, predicted)` counts. Predictions outside
    /// the task's two labels count against recall only.
    pub fn from_confusion(task: Task, counts: &BTreeMap<(Conclusion, Conclusion), usize>) -> EvalReport {
        let labels = task.labels();
        let total: usize = counts.values().sum();
        let get = |g, p| counts.get(&(g, p)).copied().unwrap_or(0);
        let per_class: Vec<ClassMetrics> = labels
            .iter()
            .map(|&c| {
                let tp = get(c, c);
                let support: usize = counts.iter().filter(|((g, _), _)| *g == c).map(|(_, n)| n).sum();
                let predicted: usize = counts.iter().filter(|((_, p), _)| *p == c).map(|(_, n)| n).sum();
                let precision = pct(tp, predicted);
                let recall = pct(tp, support);
                let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
                ClassMetrics { label: c, precision, recall, f1, support }
            })
            .collect();
        let correct: usize = labels.iter().map(|&c| get(c, c)).sum();
        let macro_f1 = macro_f1(&per_class.iter().map(|m| m.f1).collect::<Vec<_>>());
        EvalReport {
            task,
            total,
            accuracy: pct(correct, total),
            macro_f1,
            per_class,
            norm_retrieval_accuracy: None,
            unknown: counts.iter().filter(|((_, p), _)| !labels.contains(p)).map(|(_, n)| n).sum(),
            confusion: counts
                .iter()
                .map(|(&(gold, predicted), &count)| ConfusionCell { gold, predicted, count })
                .collect(),
        }
    }

    /// `(column name, value)` in table order.
    pub fn metrics(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for m in &self.per_class {
            out.push((format!("{} Prec", m.label), m.precision));
            out.push((format!("{} Rec", m.label), m.recall));
            out.push((format!("{} F1", m.label), m.f1));
        }
        out.push(("Acc".into(), self.accuracy));
        out.push(("Ma-F1".into(), self.macro_f1));
        if let Some(r) = self.norm_retrieval_accuracy {
            out.push(("Retrieval".into(), r));
        }
        out
    }

    /// Plain-text table: a class header row, a metric header row, one value row.
    pub fn to_table(&self) -> String {
        let mut top = String::new();
        let mut mid = String::new();
        let mut row = String::new();
        for m in &self.per_class {
            write!(top, "{:^24}", m.label.as_str()).unwrap();
            for (h, v) in [("Prec", m.precision), ("Rec", m.recall), ("F1", m.f1)] {
                write!(mid, "{h:>8}").unwrap();
                write!(row, "{:>8}", round_half_up(v)).unwrap();
            }
        }
        let mut tail = vec![("Acc", self.accuracy), ("Ma-F1", self.macro_f1)];
        if let Some(r) = self.norm_retrieval_accuracy {
            tail.push(("Retr", r));
        }
        for (h, v) in tail {
            write!(top, "{:8}", "").unwrap();
            write!(mid, "{h:>8}").unwrap();
            write!(row, "{:>8}", round_half_up(v)).unwrap();
        }
        format!(
            "{} (n={}, unknown={})\n{}\n{}\n{}\n",
            self.task,
            self.total,
            self.unknown,
            top.trim_end(),
            mid,
            row
        )
    }
}

fn retrieved(j: &Judgment, case: &Case, mode: RetrievalMode) -> bool {
    let Some(gold) = gold_norm(case) else { return false };
    match mode {
        RetrievalMode::Containment => j.norm_ids.contains(gold),
        RetrievalMode::ExactSet => j.norm_ids.iter().collect::<BTreeSet<_>>() == BTreeSet::from([gold]),
        RetrievalMode::Prefix => j.norm_ids.iter().any(|p| p.is_prefix_of(gold)),
    }
}

/// Scores aligned predictions. `Unknown` is wrong for the gold class and is
/// nobody's false positive.
pub fn score(preds: &[Judgment], golds: &[Case], task: Task, opts: ScoreOptions) -> Result<EvalReport, EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch { preds: preds.len(), golds: golds.len() });
    }
    let mut counts: BTreeMap<(Conclusion, Conclusion), usize> = BTreeMap::new();
    for (i, (p, g)) in preds.iter().zip(golds).enumerate() {
        let gold = Conclusion::gold(g, task).ok_or(EvalError::MissingGold(i))?;
        *counts.entry((gold, p.conclusion)).or_default() += 1;
    }
    let mut report = EvalReport::from_confusion(task, &counts);
    if let (Task::Compliance, Some(mode)) = (task, opts.retrieval) {
        let hits = preds.iter().zip(golds).filter(|(p, g)| retrieved(p, g, mode)).count();
        report.norm_retrieval_accuracy = Some(pct(hits, golds.len()));
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaMode {
    #[default]
    FullPrecision,
    /// Round both sides to two decimals before subtracting.
    PreRounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub metric: String,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub task: Task,
    pub mode: DeltaMode,
    pub rows: Vec<DeltaRow>,
}

impl DeltaTable {
    pub fn get(&self, metric: &str) -> Option<&DeltaRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<24}{:>10}{:>10}{:>10}\n", "metric", "a", "b", "delta");
        for r in &self.rows {
            writeln!(out, "{:<24}{:>10}{:>10}{:>10}", r.metric, round_half_up(r.a), round_half_up(r.b), round_half_up(r.delta))
                .unwrap();
        }
        out
    }
}

/// Signed differences `a - b` for every metric both reports carry.
pub fn compare_reports(a: &EvalReport, b: &EvalReport, mode: DeltaMode) -> Result<DeltaTable, EvalError> {
    if a.task != b.task {
        return Err(EvalError::TaskMismatch { a: a.task.to_string(), b: b.task.to_string() });
    }
    let theirs: BTreeMap<String, f64> = b.metrics().into_iter().collect();
    let rows = a
        .metrics()
        .into_iter()
        .filter_map(|(metric, x)| {
            let y = *theirs.get(&metric)?;
            let delta = match mode {
                DeltaMode::FullPrecision => x - y,
                DeltaMode::PreRounded => rounded(x) - rounded(y),
            };
            Some(DeltaRow { metric, a: x, b: y, delta })
        })
        .collect();
    Ok(DeltaTable { task: a.task, mode, rows })
}

/// One model answer. `case_id` is the 0-based line of the gold file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub case_id: serde_json::Value,
    pub transcript: String,
}

/// Orders transcripts by case id; every gold line needs exactly one.
pub fn align_transcripts(jsonl: &str, golds: usize) -> Result<Vec<String>, EvalError> {
    let mut slots: Vec<Option<String>> = vec![None; golds];
    for (n, line) in jsonl.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: TranscriptRecord =
            serde_json::from_str(line).map_err(|e| EvalError::Transcripts(format!("line {}: {e}", n + 1)))?;
        let id = match &rec.case_id {
            serde_json::Value::Number(x) => x.as_u64().map(|v| v as usize),
            serde_json::Value::String(s) => s.parse().ok(),
            _ => None,
        }
        .ok_or_else(|| EvalError::Transcripts(format!("line {}: bad case_id {}", n + 1, rec.case_id)))?;
        let slot = slots
            .get_mut(id)
            .ok_or_else(|| EvalError::Transcripts(format!("line {}: case_id {id} out of range", n + 1)))?;
        if slot.replace(rec.transcript).is_some() {
            return Err(EvalError::Transcripts(format!("duplicate case_id {id}")));
        }
    }
    let found = slots.iter().filter(|s| s.is_some()).count();
    if found != golds {
        return Err(EvalError::LengthMismatch { preds: found, golds });
    }
    Ok(slots.into_iter().map(Option::unwrap).collect())
}
