use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CorpusError;
use crate::forge::{Case, CaseSet, Provenance};
use crate::labels::{Applicability, Verdict};
use crate::norm_id::NormId;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "order")]
pub enum NegativeSampling {
    /// Take negatives in delivered (relevance) order.
    #[default]
    Relevance,
    Random { seed: u64 },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssembleConfig {
    pub negative_sampling: NegativeSampling,
    /// Defaults to the number of applicable training cases.
    pub train_negatives: Option<usize>,
    /// Defaults to the number of applicable test cases.
    pub test_negatives: Option<usize>,
    /// Grow the forbid training pool to the permit count.
    pub oversample: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SplitCount {
    pub task: String,
    pub split: String,
    pub label: String,
    pub provenance: Provenance,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub counts: Vec<SplitCount>,
    /// Real cases dropped because their background also appears in training.
    pub dropped_overlaps: usize,
    /// Training cases without a label for the task.
    pub unlabeled: usize,
    /// Forbid training cases per seed norm after oversampling.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub oversampled: BTreeMap<NormId, usize>,
}

impl SplitManifest {
    pub fn count(&self, task: &str, split: &str, label: &str, provenance: Provenance) -> usize {
        self.counts
            .iter()
            .find(|c| c.task == task && c.split == split && c.label == label && c.provenance == provenance)
            .map(|c| c.count)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetBundle {
    pub applicability_train: Vec<Case>,
    pub applicability_test: Vec<Case>,
    pub compliance_train: Vec<Case>,
    pub compliance_test: Vec<Case>,
    pub split_manifest: SplitManifest,
}

pub const BUNDLE_FILES: [&str; 4] =
    ["applicability_train.jsonl", "applicability_test.jsonl", "compliance_train.jsonl", "compliance_test.jsonl"];

impl DatasetBundle {
    pub fn splits(&self) -> [(&'static str, &'static str, &[Case]); 4] {
        [
            ("applicability", "train", &self.applicability_train),
            ("applicability", "test", &self.applicability_test),
            ("compliance", "train", &self.compliance_train),
            ("compliance", "test", &self.compliance_test),
        ]
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (file, (_, _, cases)) in BUNDLE_FILES.iter().zip(self.splits()) {
            let text: String = cases.iter().map(|c| c.to_json_line() + "\n").collect();
            std::fs::write(dir.join(file), text)?;
        }
        let manifest = serde_json::to_string_pretty(&self.split_manifest).map_err(std::io::Error::other)?;
        std::fs::write(dir.join("split_manifest.json"), manifest + "\n")
    }
}

fn appl_label(c: &Case) -> Option<&'static str> {
    c.appl_conclusion.map(Applicability::as_str)
}

fn comp_label(c: &Case) -> Option<&'static str> {
    match c.comp_conclusion {
        Some(v @ (Verdict::Permit | Verdict::Forbid)) => Some(v.as_str()),
        _ => None,
    }
}

fn tally(task: &str, split: &str, cases: &[Case], label: fn(&Case) -> Option<&'static str>, out: &mut BTreeMap<(String, String, String, Provenance), usize>) {
    for c in cases {
        if let Some(l) = label(c) {
            *out.entry((task.into(), split.into(), l.into(), c.provenance)).or_default() += 1;
        }
    }
}

/// Splits `target` over the forbid norms as evenly as possible, cycling each
/// norm's candidate pool (or its selected case when no pool is given).
fn oversample_forbid(
    forbid: &[Case],
    pool: Option<&BTreeMap<NormId, Vec<Case>>>,
    target: usize,
) -> (Vec<Case>, BTreeMap<NormId, usize>) {
    let mut by_norm: BTreeMap<Option<NormId>, Vec<&Case>> = BTreeMap::new();
    for c in forbid {
        by_norm.entry(c.seed_norm_id.clone()).or_default().push(c);
    }
    let k = by_norm.len();
    let (base, extra) = (target / k, target % k);
    let mut out = Vec::with_capacity(target);
    let mut per_norm = BTreeMap::new();
    for (j, (norm, selected)) in by_norm.into_iter().enumerate() {
        let want = base + usize::from(j < extra);
        let source: Vec<&Case> = match (norm.as_ref().and_then(|n| pool.and_then(|p| p.get(n))), &selected) {
            (Some(cands), _) if !cands.is_empty() => cands.iter().collect(),
            _ => selected,
        };
        out.extend(source.iter().cycle().take(want).map(|c| (*c).clone()));
        if let Some(n) = norm {
            per_norm.insert(n, want);
        }
    }
    (out, per_norm)
}

/// Builds the four splits.
///
/// Applicability: training is every labeled synthetic case plus the first
/// negatives; testing is the real applicable cases plus the next negatives.
/// Compliance: training is the synthetic permit/forbid cases, testing the
/// real ones. Real cases whose background also occurs in training are dropped.
pub fn assemble(
    synthetic: &CaseSet,
    forbid_pool: Option<&BTreeMap<NormId, Vec<Case>>>,
    real_applicable: &[Case],
    real_irrelevant: &[Case],
    cfg: &AssembleConfig,
) -> Result<DatasetBundle, CorpusError> {
    let mut manifest = SplitManifest::default();

    let appl_train_pos: Vec<Case> = synthetic.cases.iter().filter(|c| appl_label(c).is_some()).cloned().collect();
    manifest.unlabeled += synthetic.len() - appl_train_pos.len();
    let train_hashes: BTreeSet<String> = synthetic.cases.iter().map(Case::background_hash).collect();

    let mut test_pos = Vec::new();
    for c in real_applicable.iter().filter(|c| c.appl_conclusion == Some(Applicability::Applicable)) {
        if train_hashes.contains(&c.background_hash()) {
            manifest.dropped_overlaps += 1;
        } else {
            test_pos.push(c.clone());
        }
    }

    let n_train = cfg.train_negatives.unwrap_or(appl_train_pos.len());
    let n_test = cfg.test_negatives.unwrap_or(test_pos.len());
    let mut taken: BTreeSet<String> = train_hashes.clone();
    taken.extend(test_pos.iter().map(Case::background_hash));
    let mut negatives: Vec<Case> = Vec::new();
    for c in real_irrelevant {
        if taken.insert(c.background_hash()) {
            let mut c = c.clone();
            c.appl_conclusion = Some(Applicability::NotApplicable);
            c.comp_conclusion = Some(Verdict::NotApplicable);
            negatives.push(c);
        }
    }
    if let NegativeSampling::Random { seed } = cfg.negative_sampling {
        negatives.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let needed = n_train + n_test;
    if negatives.len() < needed {
        return Err(CorpusError::InsufficientNegatives { needed, available: negatives.len() });
    }
    let mut negatives = negatives.into_iter();
    let mut applicability_train = appl_train_pos;
    applicability_train.extend(negatives.by_ref().take(n_train));
    let mut applicability_test = test_pos.clone();
    applicability_test.extend(negatives.take(n_test));

    let labeled: Vec<&Case> = synthetic.cases.iter().filter(|c| comp_label(c).is_some()).collect();
    let permits: Vec<Case> = labeled.iter().filter(|c| c.comp_conclusion == Some(Verdict::Permit)).map(|c| (*c).clone()).collect();
    let mut forbids: Vec<Case> = labeled.iter().filter(|c| c.comp_conclusion == Some(Verdict::Forbid)).map(|c| (*c).clone()).collect();
    if cfg.oversample && !forbids.is_empty() && permits.len() > forbids.len() {
        let (grown, per_norm) = oversample_forbid(&forbids, forbid_pool, permits.len());
        forbids = grown;
        manifest.oversampled = per_norm;
    }
    let mut compliance_train = permits;
    compliance_train.extend(forbids);
    let compliance_test: Vec<Case> = test_pos.into_iter().filter(|c| comp_label(c).is_some()).collect();

    let mut counts = BTreeMap::new();
    tally("applicability", "train", &applicability_train, appl_label, &mut counts);
    tally("applicability", "test", &applicability_test, appl_label, &mut counts);
    tally("compliance", "train", &compliance_train, comp_label, &mut counts);
    tally("compliance", "test", &compliance_test, comp_label, &mut counts);
    manifest.counts = counts
        .into_iter()
        .map(|((task, split, label, provenance), count)| SplitCount { task, split, label, provenance, count })
        .collect();

    Ok(DatasetBundle { applicability_train, applicability_test, compliance_train, compliance_test, split_manifest: manifest })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case(bg: &str, prov: Provenance, appl: Applicability, comp: Verdict, seed: Option<&str>) -> Case {
        Case {
            background: bg.into(),
            features: Default::default(),
            cited_norm_ids: vec![],
            appl_conclusion: Some(appl),
            comp_conclusion: Some(comp),
            seed_norm_id: seed.map(|s| s.parse().unwrap()),
            provenance: prov,
            raw_response: String::new(),
        }
    }

    fn small() -> (CaseSet, Vec<Case>, Vec<Case>) {
        let syn = CaseSet::from_cases(vec![
            case("s1", Provenance::Synthetic, Applicability::Applicable, Verdict::Permit, Some("164.502(a)")),
            case("s2", Provenance::Synthetic, Applicability::Applicable, Verdict::Permit, Some("164.502(b)")),
            case("s3", Provenance::Synthetic, Applicability::Applicable, Verdict::Permit, Some("164.502(c)")),
            case("s4", Provenance::Synthetic, Applicability::Applicable, Verdict::Forbid, Some("164.502(d)")),
        ]);
        let real = vec![
            case("r1", Provenance::Real, Applicability::Applicable, Verdict::Permit, None),
            case("s1", Provenance::Real, Applicability::Applicable, Verdict::Forbid, None),
        ];
        let neg: Vec<Case> = (0..8)
            .map(|i| case(&format!("n{}", i % 7), Provenance::Real, Applicability::NotApplicable, Verdict::NotApplicable, None))
            .collect();
        (syn, real, neg)
    }

    #[test]
    fn splits_are_matched_and_disjoint() {
        let (syn, real, neg) = small();
        let b = assemble(&syn, None, &real, &neg, &AssembleConfig::default()).unwrap();
        let m = &b.split_manifest;
        assert_eq!(m.dropped_overlaps, 1);
        assert_eq!(m.count("applicability", "train", "Applicable", Provenance::Synthetic), 4);
        assert_eq!(m.count("applicability", "train", "Not Applicable", Provenance::Real), 4);
        assert_eq!(m.count("applicability", "test", "Applicable", Provenance::Real), 1);
        assert_eq!(m.count("applicability", "test", "Not Applicable", Provenance::Real), 1);
        assert_eq!(m.count("compliance", "train", "Forbid", Provenance::Synthetic), 1);
        assert_eq!(m.count("compliance", "test", "Permit", Provenance::Real), 1);
        for (train, test) in [(&b.applicability_train, &b.applicability_test), (&b.compliance_train, &b.compliance_test)] {
            let a: BTreeSet<String> = train.iter().map(Case::background_hash).collect();
            assert!(test.iter().all(|c| !a.contains(&c.background_hash())));
        }
        assert_eq!(b.applicability_test[1].background, "n4");
    }

    #[test]
    fn too_few_negatives() {
        let (syn, real, neg) = small();
        let err = assemble(&syn, None, &real, &neg[..3], &AssembleConfig::default()).unwrap_err();
        assert!(matches!(err, CorpusError::InsufficientNegatives { needed: 5, available: 3 }));
    }

    #[test]
    fn random_negatives_are_seeded() {
        let (syn, real, neg) = small();
        let cfg = AssembleConfig { negative_sampling: NegativeSampling::Random { seed: 4 }, ..Default::default() };
        let a = assemble(&syn, None, &real, &neg, &cfg).unwrap();
        let b = assemble(&syn, None, &real, &neg, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oversampling_cycles_the_pool() {
        let (syn, real, neg) = small();
        let pool = BTreeMap::from([(
            "164.502(d)".parse::<NormId>().unwrap(),
            vec![
                case("p1", Provenance::Synthetic, Applicability::Applicable, Verdict::Forbid, Some("164.502(d)")),
                case("p2", Provenance::Synthetic, Applicability::Applicable, Verdict::Forbid, Some("164.502(d)")),
            ],
        )]);
        let cfg = AssembleConfig { oversample: true, ..Default::default() };
        let b = assemble(&syn, Some(&pool), &real, &neg, &cfg).unwrap();
        let forbids: Vec<&str> = b
            .compliance_train
            .iter()
            .filter(|c| c.comp_conclusion == Some(Verdict::Forbid))
            .map(|c| c.background.as_str())
            .collect();
        assert_eq!(forbids, ["p1", "p2", "p1"]);
    }

    #[test]
    fn bundle_files() {
        let (syn, real, neg) = small();
        let b = assemble(&syn, None, &real, &neg, &AssembleConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        b.write_to(dir.path()).unwrap();
        for f in BUNDLE_FILES.iter().chain(["split_manifest.json"].iter()) {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let text = std::fs::read_to_string(dir.path().join("compliance_test.jsonl")).unwrap();
        assert_eq!(text.lines().count(), 1);
    }
}
