//! Extract real cases from a court-decision snapshot with recorded answers
//! and show how they would be routed.
//!
//!     cargo run --example corpus

use std::path::Path;

use ci_forge::corpus::{extract_all, fetch_cases, length_filter, CaseSource, FetchLimits};
use ci_forge::gateway::ModelGateway;
use ci_forge::LawProfile;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let gateway = ModelGateway::replay_file(&dir.join("cassette.jsonl"))?;
    let law = LawProfile::default();

    let snapshot = dir.join("cap/relevant.jsonl");
    let fetched = fetch_cases("HIPAA Privacy Rule", CaseSource::Snapshot(&snapshot), FetchLimits::default())?;
    let kept = length_filter(fetched.clone());
    println!("{} fetched, {} within length bounds", fetched.len(), kept.len());

    for result in extract_all(&kept, &gateway, &law) {
        let e = result?;
        let ids: Vec<String> = e.case.cited_norm_ids.iter().map(|i| i.to_string()).collect();
        println!(
            "{}  {:<16} cites [{}] flags {:?}",
            e.source_id,
            e.case.comp_conclusion.map(|v| v.as_str()).unwrap_or("unlabeled"),
            ids.join(", "),
            e.flags
        );
    }
    Ok(())
}
