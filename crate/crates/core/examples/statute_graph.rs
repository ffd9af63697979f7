//! Parse the bundled statute excerpt into a section graph and print one
//! norm's root-to-leaf chain.
//!
//!     cargo run --example statute_graph

use std::path::Path;

use ci_forge::statute::{extract_norms, parse_statute, StatuteSourceDocument};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/hipaa_mini.json");
    let doc = StatuteSourceDocument::from_json(&std::fs::read_to_string(path)?)?;
    let graph = parse_statute(&doc)?;
    graph.validate()?;
    println!("{} nodes, {} leaves", graph.nodes().len(), graph.leaves().count());

    println!("cross-references:");
    for (from, to) in graph.refer_edges() {
        let note = if graph.contains(to) { "" } else { "  (outside the excerpt)" };
        println!("  {from} -> {to}{note}");
    }

    let norms = extract_norms(&graph);
    let norm = norms.iter().find(|n| n.leaf_id.to_string() == "164.502(j)(1)(i)").expect("leaf present");
    println!("\n{}", norm.full_text);
    Ok(())
}
