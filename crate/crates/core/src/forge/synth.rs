use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::select::{diversity_select, Selection};
use super::{build_generation_prompt, conclusion_match, feature_filter, norm_match, parse_case_response, Case, CaseSet};
use crate::error::GatewayError;
use crate::gateway::{ChatRequest, ModelGateway};
use crate::labels::Polarity;
use crate::norm_id::NormId;
use crate::statute::{NodeId, Norm};
use crate::LawProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub law: LawProfile,
    pub samples_per_norm: u32,
    pub temperature: f64,
    pub max_tokens: u32,
    pub feature_filter: bool,
    pub norm_filter: bool,
    pub conclusion_filter: bool,
    /// Off means a seeded random pick per norm.
    pub diversity: bool,
    pub selection: Selection,
    pub seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            law: LawProfile::default(),
            samples_per_norm: 5,
            temperature: 1.0,
            max_tokens: 2048,
            feature_filter: true,
            norm_filter: true,
            conclusion_filter: true,
            diversity: true,
            selection: Selection::MinMax,
            seed: 0,
        }
    }
}

impl SynthesisConfig {
    pub fn effective_selection(&self) -> Selection {
        if self.diversity {
            self.selection
        } else {
            Selection::Random { seed: self.seed }
        }
    }

    pub fn generation_request(&self, seed: &Norm) -> ChatRequest {
        ChatRequest::new(build_generation_prompt(seed, &self.law))
            .temperature(self.temperature)
            .samples(self.samples_per_norm)
            .max_tokens(self.max_tokens)
            .tag(format!("generate:{}", seed.leaf_id))
    }
}

/// Survivors after each stage, summed over norms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub generated: usize,
    pub parsed: usize,
    pub feature: usize,
    pub norm: usize,
    pub conclusion: usize,
    pub selected: usize,
}

impl StageCounts {
    pub fn as_array(&self) -> [usize; 6] {
        [self.generated, self.parsed, self.feature, self.norm, self.conclusion, self.selected]
    }

    pub fn is_non_increasing(&self) -> bool {
        self.as_array().windows(2).all(|w| w[0] >= w[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Disposition {
    Selected { candidate: usize, score: f64 },
    /// Every candidate was removed; `stage` names the filter that emptied the pool.
    Unfilled { stage: String },
    GatewayFailed { message: String },
    InvalidSeed { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormOutcome {
    pub norm_id: NodeId,
    pub polarity: Option<Polarity>,
    pub counts: StageCounts,
    /// Why each rejected sample was dropped, by sample index.
    pub rejections: BTreeMap<usize, String>,
    pub disposition: Disposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisManifest {
    pub config: SynthesisConfig,
    pub seeds: usize,
    pub stages: StageCounts,
    pub norms: Vec<NormOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisRun {
    pub cases: CaseSet,
    /// Candidates that survived every enabled filter, by seed norm.
    pub pool: BTreeMap<NormId, Vec<Case>>,
    pub manifest: SynthesisManifest,
}

struct Filtered {
    outcome: NormOutcome,
    survivors: Vec<Case>,
}

fn filter_samples(seed: &Norm, texts: &[String], cfg: &SynthesisConfig) -> Filtered {
    let mut counts = StageCounts { generated: texts.len(), ..Default::default() };
    let mut rejections = BTreeMap::new();
    let mut survivors = Vec::new();
    let mut emptied_at: Option<&str> = None;
    for (i, text) in texts.iter().enumerate() {
        let case = match parse_case_response(text, seed) {
            Ok(c) => c,
            Err(e) => {
                rejections.insert(i, e.to_string());
                continue;
            }
        };
        counts.parsed += 1;
        if cfg.feature_filter && !feature_filter(&case) {
            rejections.insert(i, "missing vital feature".into());
            continue;
        }
        counts.feature += 1;
        if cfg.norm_filter && !norm_match(&case, seed) {
            rejections.insert(i, "seed norm not cited".into());
            continue;
        }
        counts.norm += 1;
        if cfg.conclusion_filter && !conclusion_match(&case, seed) {
            rejections.insert(i, "conclusion disagrees with seed".into());
            continue;
        }
        counts.conclusion += 1;
        survivors.push(case);
    }
    for (stage, n) in [("generate", counts.generated), ("parse", counts.parsed), ("feature", counts.feature), ("norm", counts.norm), ("conclusion", counts.conclusion)] {
        if n == 0 {
            emptied_at = Some(stage);
            break;
        }
    }
    let disposition = match emptied_at {
        Some(stage) => Disposition::Unfilled { stage: stage.into() },
        // filled in after selection
        None => Disposition::Unfilled { stage: "select".into() },
    };
    Filtered {
        outcome: NormOutcome { norm_id: seed.leaf_id.clone(), polarity: seed.polarity, counts, rejections, disposition },
        survivors,
    }
}

/// Generates, parses and filters candidates for every seed, then picks one
/// case per norm. Per-norm failures are recorded in the manifest; only
/// gateway configuration errors abort.
pub fn run_synthesis(seeds: &[Norm], gateway: &ModelGateway, cfg: &SynthesisConfig) -> Result<SynthesisRun, GatewayError> {
    let results: Vec<Result<Filtered, GatewayError>> = gateway.par_map(seeds, |seed| {
        let invalid = |message: &str| Filtered {
            outcome: NormOutcome {
                norm_id: seed.leaf_id.clone(),
                polarity: seed.polarity,
                counts: StageCounts::default(),
                rejections: BTreeMap::new(),
                disposition: Disposition::InvalidSeed { message: message.into() },
            },
            survivors: vec![],
        };
        if seed.polarity.is_none() {
            return Ok(invalid("seed has no polarity"));
        }
        if seed.norm_id().is_none() {
            return Ok(invalid("seed has no section id"));
        }
        match gateway.complete(&cfg.generation_request(seed)) {
            Ok(resp) => Ok(filter_samples(seed, &resp.texts, cfg)),
            Err(e) if e.is_configuration() => Err(e),
            Err(e) => {
                let mut f = invalid("");
                f.outcome.disposition = Disposition::GatewayFailed { message: e.to_string() };
                Ok(f)
            }
        }
    });

    let mut outcomes = Vec::with_capacity(results.len());
    let mut pool: BTreeMap<NormId, Vec<Case>> = BTreeMap::new();
    for (seed, r) in seeds.iter().zip(results) {
        let filtered = r?;
        if let (Some(id), Disposition::Unfilled { stage }) = (seed.norm_id(), &filtered.outcome.disposition) {
            if stage == "select" {
                pool.entry(id.clone()).or_default().extend(filtered.survivors);
            }
        }
        outcomes.push(filtered.outcome);
    }

    let selected = diversity_select(&pool, cfg.effective_selection());
    let mut stages = StageCounts::default();
    for o in &mut outcomes {
        if let Some((candidate, score)) = o.norm_id.as_norm_id().and_then(|id| selected.picks.get(id)) {
            o.disposition = Disposition::Selected { candidate: *candidate, score: *score };
            o.counts.selected = 1;
        }
        let c = o.counts;
        stages.generated += c.generated;
        stages.parsed += c.parsed;
        stages.feature += c.feature;
        stages.norm += c.norm;
        stages.conclusion += c.conclusion;
    }
    stages.selected = selected.set.len();

    Ok(SynthesisRun {
        cases: selected.set,
        pool,
        manifest: SynthesisManifest { config: cfg.clone(), seeds: seeds.len(), stages, norms: outcomes },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::tests::{seed, WHISTLEBLOWER};
    use crate::gateway::{Cassette, ChatResponse, TokenUsage};

    fn gateway_for(pairs: &[(ChatRequest, Vec<String>)]) -> ModelGateway {
        let mut cassette = Cassette::new();
        for (req, texts) in pairs {
            let resp = ChatResponse { texts: texts.clone(), model_name: "fixture".into(), token_usage: TokenUsage::default(), truncated: false };
            cassette.append(req.clone(), resp).unwrap();
        }
        ModelGateway::replay(cassette)
    }

    #[test]
    fn filters_and_selection() {
        let s = seed("164.502(j)(1)(i)", Polarity::Permit);
        let cfg = SynthesisConfig { samples_per_norm: 4, ..Default::default() };
        let texts = vec![
            WHISTLEBLOWER.to_string(),
            WHISTLEBLOWER.replace("Q4: Permit", "Q4: Forbid"),
            WHISTLEBLOWER.replace("Subject Role: Patients", "Subject Role: None"),
            "no sections here".to_string(),
        ];
        let gw = gateway_for(&[(cfg.generation_request(&s), texts)]);
        let run = run_synthesis(std::slice::from_ref(&s), &gw, &cfg).unwrap();
        assert_eq!(run.manifest.stages.as_array(), [4, 3, 2, 2, 1, 1]);
        assert!(run.manifest.stages.is_non_increasing());
        assert_eq!(run.cases.len(), 1);
        let outcome = &run.manifest.norms[0];
        assert_eq!(outcome.rejections.len(), 3);
        assert_eq!(outcome.disposition, Disposition::Selected { candidate: 0, score: 0.0 });

        let loose = SynthesisConfig { conclusion_filter: false, ..cfg.clone() };
        let run = run_synthesis(&[s], &gw, &loose).unwrap();
        assert_eq!(run.manifest.stages.as_array(), [4, 3, 2, 2, 2, 1]);
    }

    #[test]
    fn replay_miss_is_reported_not_fatal() {
        let a = seed("164.502(j)(1)(i)", Polarity::Permit);
        let b = seed("164.502(a)(5)(i)", Polarity::Forbid);
        let cfg = SynthesisConfig::default();
        let gw = gateway_for(&[(cfg.generation_request(&a), vec![WHISTLEBLOWER.into()])]);
        let run = run_synthesis(&[a, b], &gw, &cfg).unwrap();
        assert_eq!(run.cases.len(), 1);
        assert!(matches!(run.manifest.norms[1].disposition, Disposition::GatewayFailed { .. }));
    }

    #[test]
    fn unfilled_norm_names_the_emptying_stage() {
        let a = seed("164.502(a)(5)(i)", Polarity::Forbid);
        let cfg = SynthesisConfig::default();
        let gw = gateway_for(&[(cfg.generation_request(&a), vec![WHISTLEBLOWER.into()])]);
        let run = run_synthesis(&[a], &gw, &cfg).unwrap();
        assert!(run.cases.is_empty());
        assert_eq!(run.manifest.norms[0].disposition, Disposition::Unfilled { stage: "norm".into() });
    }

    #[test]
    fn diversity_off_uses_seeded_random() {
        let cfg = SynthesisConfig { diversity: false, seed: 9, ..Default::default() };
        assert_eq!(cfg.effective_selection(), Selection::Random { seed: 9 });
    }
}
