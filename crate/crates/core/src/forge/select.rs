use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rouge::{rouge_l_tokens, tokenize};
use super::{Case, CaseSet};
use crate::norm_id::NormId;

/// How one candidate is picked per norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "strategy")]
pub enum Selection {
    /// Least similar to everything already chosen.
    MinMax,
    /// Most similar to everything already chosen.
    HighestRouge,
    /// Uniform pick from a seeded generator; used when diversity ranking is off.
    Random { seed: u64 },
}

impl std::str::FromStr for Selection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "min-max" | "minmax" => Ok(Selection::MinMax),
            "highest-rouge" => Ok(Selection::HighestRouge),
            other => match other.strip_prefix("random:").map(str::parse) {
                Some(Ok(seed)) => Ok(Selection::Random { seed }),
                _ => Err(format!("unknown selection `{s}` (min-max, highest-rouge, random:<seed>)")),
            },
        }
    }
}

/// Result of selection: the chosen cases in norm order, which candidate each
/// norm got and its score, and norms that had nothing to choose from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Selected {
    pub set: CaseSet,
    pub picks: BTreeMap<NormId, (usize, f64)>,
    pub unfilled: Vec<NormId>,
}

/// Greedy selection over norms in id order. Each candidate is scored by its
/// highest ROUGE-L against the backgrounds picked so far; ties go to the
/// earliest candidate.
pub fn diversity_select(candidates: &BTreeMap<NormId, Vec<Case>>, selection: Selection) -> Selected {
    let mut out = Selected::default();
    let mut chosen_tokens: Vec<Vec<String>> = Vec::new();
    let mut rng = match selection {
        Selection::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    for (norm, pool) in candidates {
        if pool.is_empty() {
            out.unfilled.push(norm.clone());
            continue;
        }
        let tokens: Vec<Vec<String>> = pool.iter().map(|c| tokenize(&c.background)).collect();
        let scores: Vec<f64> = tokens
            .iter()
            .map(|t| chosen_tokens.par_iter().map(|c| rouge_l_tokens(t, c)).reduce(|| 0.0, f64::max))
            .collect();
        let pick = match (&selection, rng.as_mut()) {
            (Selection::Random { .. }, Some(rng)) => rng.gen_range(0..pool.len()),
            (Selection::HighestRouge, _) => argbest(&scores, |a, b| a > b),
            _ => argbest(&scores, |a, b| a < b),
        };
        out.picks.insert(norm.clone(), (pick, scores[pick]));
        out.set.per_norm_index.insert(norm.clone(), vec![out.set.cases.len()]);
        out.set.cases.push(pool[pick].clone());
        chosen_tokens.push(tokens.into_iter().nth(pick).unwrap());
    }
    out
}

/// First index whose score strictly beats all earlier ones.
fn argbest(scores: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if better(s, scores[best]) {
            best = i;
        }
    }
    best
}
