//! Check an information flow against permit/forbid predicates.
//!
//!     cargo run --example flow_check

use std::path::Path;

use ci_forge::ci::{check_flow, judge_flow, load_predicates, InformationFlow, RoleLexicon};
use ci_forge::qa::FlowFeatures;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let preds = load_predicates(&std::fs::read_to_string(dir.join("predicates.json"))?)?;
    let roles = RoleLexicon::from_json(&std::fs::read_to_string(dir.join("roles.json"))?)?;

    let features = FlowFeatures::parse(
        "Sender: Jane, Sender Role: Nurse, Recipient: Tom, Recipient Role: Health department official, \
         Subject: Affected patients, Subject Role: Patients, Type: Protected health information, \
         Purpose: Report misconduct, In Reply To: None, Consented By: None, \
         Belief: The hospital endangered patients",
    );
    let flow = InformationFlow::from_features(&features)?;
    for p in &preds {
        println!("{:<22} {:?}", p.norm_id.to_string(), check_flow(&flow, p, &roles));
    }
    println!("overall: {:?}", judge_flow(&flow, &preds, &roles));
    Ok(())
}
