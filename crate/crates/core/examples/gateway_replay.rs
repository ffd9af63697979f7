//! Classify norms offline by replaying a recorded cassette.
//!
//!     cargo run --example gateway_replay

use std::path::Path;

use ci_forge::gateway::ModelGateway;
use ci_forge::statute::{classify_norms, extract_norms, parse_statute, seed_norms, ClassifyOptions, StatuteSourceDocument};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let doc = StatuteSourceDocument::from_json(&std::fs::read_to_string(dir.join("hipaa_mini.json"))?)?;
    let norms = extract_norms(&parse_statute(&doc)?);

    let gateway = ModelGateway::replay_file(&dir.join("cassette.jsonl"))?;
    let classified = classify_norms(&norms, &gateway, &ClassifyOptions::default())?;
    for n in &classified {
        let types: Vec<&str> = n.types.iter().map(|t| t.as_str()).collect();
        println!("{:<28} {}", n.leaf_id.to_string(), types.join(" + "));
    }
    let seeds = seed_norms(&classified);
    println!("\n{} seeds, {} network calls", seeds.seeds.len(), gateway.network_calls());
    Ok(())
}
