//! Render a tuning example, then score recorded model transcripts.
//!
//!     cargo run --example evaluate

use std::path::Path;

use ci_forge::eval::{align_transcripts, parse_judgment, render_prompt, score, InstructionExample, Mode, RetrievalMode, ScoreOptions, Task};
use ci_forge::forge::read_cases;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/eval");
    let golds = read_cases(&std::fs::read_to_string(dir.join("gold.jsonl"))?)?;

    let example = InstructionExample {
        instruction: "Determine whether the HIPAA Privacy Rule permits or forbids the case.".into(),
        input: Some(format!("Read the case background: {}", golds[0].background)),
        response: String::new(),
        task: Task::Compliance,
        mode: Mode::Vanilla,
    };
    println!("{}\n", render_prompt(&example));

    let transcripts = align_transcripts(&std::fs::read_to_string(dir.join("transcripts.jsonl"))?, golds.len())?;
    let judgments: Vec<_> = transcripts.iter().map(|t| parse_judgment(t, Task::Compliance, Mode::MultiStep)).collect();
    for retrieval in [RetrievalMode::Containment, RetrievalMode::Prefix] {
        let report = score(&judgments, &golds, Task::Compliance, ScoreOptions { retrieval: Some(retrieval) })?;
        println!("retrieval by {retrieval:?}");
        print!("{}", report.to_table());
    }
    Ok(())
}
