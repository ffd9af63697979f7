//! Generate, filter and select synthetic cases from recorded generations.
//!
//!     cargo run --example synthesize

use std::path::Path;

use ci_forge::forge::{run_synthesis, Disposition, SynthesisConfig};
use ci_forge::gateway::ModelGateway;
use ci_forge::statute::{classify_norms, extract_norms, parse_statute, seed_norms, ClassifyOptions, StatuteSourceDocument};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let doc = StatuteSourceDocument::from_json(&std::fs::read_to_string(dir.join("hipaa_mini.json"))?)?;
    let gateway = ModelGateway::replay_file(&dir.join("cassette.jsonl"))?;
    let classified = classify_norms(&extract_norms(&parse_statute(&doc)?), &gateway, &ClassifyOptions::default())?;
    let seeds = seed_norms(&classified).seeds;

    let run = run_synthesis(&seeds, &gateway, &SynthesisConfig::default())?;
    let s = run.manifest.stages;
    println!(
        "generated {} -> parsed {} -> features {} -> norm {} -> conclusion {} -> selected {}",
        s.generated, s.parsed, s.feature, s.norm, s.conclusion, s.selected
    );
    for n in &run.manifest.norms {
        match &n.disposition {
            Disposition::Selected { candidate, score } => {
                println!("{:<24} candidate {candidate}, max ROUGE-L {score:.3}", n.norm_id.to_string())
            }
            other => println!("{:<24} {other:?}", n.norm_id.to_string()),
        }
    }
    if let Some(case) = run.cases.cases.first() {
        println!("\n{}", case.background);
    }
    Ok(())
}
