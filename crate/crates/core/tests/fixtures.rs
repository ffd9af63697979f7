mod common;

use common::*;

#[test]
fn cassette_matches_scripts() {
    let built = build_cassette();
    if std::env::var_os(REGENERATE_ENV).is_some() {
        built.write_to(&cassette_path()).unwrap();
    }
    let recorded = recorded_cassette();
    let fps = |c: &ci_forge::gateway::Cassette| c.entries().map(|e| e.fingerprint.clone()).collect::<Vec<_>>();
    assert_eq!(fps(&built), fps(&recorded), "prompts changed; rerun with {REGENERATE_ENV}=1");
    for (a, b) in built.entries().zip(recorded.entries()) {
        assert_eq!(a.response, b.response, "{}", a.request.tag);
    }
}

#[test]
fn every_mini_leaf_has_a_classification_script() {
    let scripts: std::collections::BTreeMap<String, serde_json::Value> =
        serde_json::from_str(&read("scripts/classification.json")).unwrap();
    let leaves: Vec<String> = mini_norms().iter().map(|n| n.leaf_id.to_string()).collect();
    assert_eq!(leaves, scripts.keys().cloned().collect::<Vec<_>>());
}
