//! Shared fixture loading. The recorded cassette is rebuilt from the
//! response scripts in `fixtures/scripts` using the library's own request
//! builders, so a prompt change shows up as a fixture mismatch.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use ci_forge::corpus::{extraction_request, read_snapshot};
use ci_forge::forge::SynthesisConfig;
use ci_forge::gateway::{Cassette, ChatRequest, ChatResponse, ModelGateway, TokenUsage};
use ci_forge::statute::{
    classification_request, classification_resample, classify_norms, extract_norms, parse_statute, seed_norms,
    ClassifyOptions, Norm, StatuteGraph, StatuteSourceDocument,
};
use ci_forge::eval::{Mode, Task};
use ci_forge::pipeline::{Pipeline, PipelineConfig};
use ci_forge::LawProfile;
use serde::Deserialize;

pub const REGENERATE_ENV: &str = "CI_FORGE_REGENERATE_FIXTURES";

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture(name: &str) -> PathBuf {
    fixtures().join(name)
}

pub fn read(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn mini_graph() -> StatuteGraph {
    let doc = StatuteSourceDocument::from_json(&read("hipaa_mini.json")).expect("mini statute parses");
    parse_statute(&doc).expect("mini statute is valid")
}

pub fn mini_norms() -> Vec<Norm> {
    extract_norms(&mini_graph())
}

#[derive(Debug, Clone, Deserialize)]
pub struct Candidate {
    /// none, unparseable, feature, norm or conclusion: the one check it fails.
    pub defect: String,
    pub text: String,
}

pub fn synthesis_script() -> BTreeMap<String, Vec<Candidate>> {
    serde_json::from_str(&read("scripts/synthesis.json")).unwrap()
}

fn response(texts: Vec<String>) -> ChatResponse {
    ChatResponse { texts, model_name: "fixture-model".into(), token_usage: TokenUsage::default(), truncated: false }
}

fn record(c: &mut Cassette, req: ChatRequest, texts: Vec<String>) {
    c.append(req, response(texts)).expect("in-memory append");
}

/// Seeds as the replayed classification produces them.
pub fn seeds_from(cassette: &Cassette) -> Vec<Norm> {
    let gw = ModelGateway::replay(cassette.clone());
    let classified = classify_norms(&mini_norms(), &gw, &ClassifyOptions::default()).expect("classification replays");
    seed_norms(&classified).seeds
}

pub fn build_cassette() -> Cassette {
    let law = LawProfile::default();
    let mut c = Cassette::new();

    let classes: BTreeMap<String, Vec<String>> = serde_json::from_str(&read("scripts/classification.json")).unwrap();
    let opts = ClassifyOptions::default();
    for norm in mini_norms() {
        let script = &classes[&norm.leaf_id.to_string()];
        record(&mut c, classification_request(&norm, &opts), vec![script[0].clone()]);
        if script.len() > 1 {
            record(&mut c, classification_resample(&norm, &opts), script[1..].to_vec());
        }
    }

    let synth = synthesis_script();
    let cfg = SynthesisConfig::default();
    for seed in seeds_from(&c) {
        let texts = synth[&seed.leaf_id.to_string()].iter().map(|k| k.text.clone()).collect();
        record(&mut c, cfg.generation_request(&seed), texts);
    }

    let extractions: BTreeMap<String, String> = serde_json::from_str(&read("scripts/extraction.json")).unwrap();
    let mut seen = BTreeSet::new();
    for file in ["cap/relevant.jsonl", "cap/irrelevant.jsonl"] {
        for r in read_snapshot(&fixture(file)).unwrap() {
            if seen.insert(r.source_id.clone()) {
                record(&mut c, extraction_request(&law, &r), vec![extractions[&r.source_id].clone()]);
            }
        }
    }
    c
}

pub fn cassette_path() -> PathBuf {
    fixture("cassette.jsonl")
}

pub fn recorded_cassette() -> Cassette {
    Cassette::open(&cassette_path(), false).expect("fixture cassette loads")
}

pub fn fixture_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&fixture("pipeline.json")).expect("fixture config loads");
    cfg.output_dir = out.to_path_buf();
    cfg
}

/// Every stage over the fixtures, ending with a scored compliance run.
pub fn run_pipeline(out: &Path) -> Pipeline {
    let p = Pipeline::new(fixture_config(out));
    p.ingest_statute().unwrap();
    p.extract_norms(None).unwrap();
    p.classify_norms(None).unwrap();
    p.synthesize(None).unwrap();
    p.ingest_cap().unwrap();
    p.assemble(None).unwrap();
    for task in [Task::Applicability, Task::Compliance] {
        for mode in [Mode::Vanilla, Mode::MultiStep] {
            p.compile(task, mode, None, None, None).unwrap();
        }
    }
    p.compile(Task::Recitation, Mode::Vanilla, None, None, None).unwrap();
    p.evaluate(Task::Compliance, Mode::MultiStep, &fixture("eval/gold.jsonl"), &fixture("eval/transcripts.jsonl"), None)
        .unwrap();
    p
}

/// Relative path to bytes for every file under `dir`.
pub fn snapshot_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let key = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(key, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}
