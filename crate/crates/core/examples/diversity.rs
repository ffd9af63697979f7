//! ROUGE-L similarity and the two selection strategies on a small pool.
//!
//!     cargo run --example diversity

use std::collections::BTreeMap;

use ci_forge::forge::{diversity_select, rouge_l, Case, Provenance, Selection};
use ci_forge::NormId;

fn case(background: &str) -> Case {
    Case {
        background: background.into(),
        features: Default::default(),
        cited_norm_ids: vec![],
        appl_conclusion: None,
        comp_conclusion: None,
        seed_norm_id: None,
        provenance: Provenance::Synthetic,
        raw_response: String::new(),
    }
}

fn main() {
    let first = "A nurse sends lab results to the county health department.";
    let pool = [
        "A nurse sends lab results to the state health department.",
        "An insurer shares claim history with a marketing firm.",
        "A nurse faxes lab results to an employer.",
    ];
    for p in pool {
        println!("{:.3}  {p}", rouge_l(first, p));
    }

    let a: NormId = "164.502(a)(1)(i)".parse().unwrap();
    let b: NormId = "164.506(c)(1)".parse().unwrap();
    let candidates = BTreeMap::from([(a, vec![case(first)]), (b.clone(), pool.iter().map(|p| case(p)).collect())]);
    for selection in [Selection::MinMax, Selection::HighestRouge, Selection::Random { seed: 1 }] {
        let picked = diversity_select(&candidates, selection);
        let (i, score) = picked.picks[&b];
        println!("{selection:?}: candidate {i} (score {score:.3})");
    }
}
