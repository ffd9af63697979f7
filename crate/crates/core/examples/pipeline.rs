//! Run every stage over the bundled fixtures into a scratch directory.
//!
//!     cargo run --example pipeline [-- OUT_DIR]

use std::path::{Path, PathBuf};

use ci_forge::eval::{Mode, Task};
use ci_forge::pipeline::{Pipeline, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("ci-forge-example"));
    let mut cfg = PipelineConfig::load(&fixtures.join("pipeline.json"))?;
    cfg.output_dir = out.clone();
    let p = Pipeline::new(cfg);

    let manifests = [
        p.ingest_statute()?,
        p.extract_norms(None)?,
        p.classify_norms(None)?,
        p.synthesize(None)?,
        p.ingest_cap()?,
        p.assemble(None)?,
        p.compile(Task::Compliance, Mode::MultiStep, None, None, None)?,
    ];
    for m in &manifests {
        println!("{:<16} -> {}", m.subcommand, m.outputs.join(", "));
    }
    let (report, _) = p.evaluate(
        Task::Compliance,
        Mode::MultiStep,
        &fixtures.join("eval/gold.jsonl"),
        &fixtures.join("eval/transcripts.jsonl"),
        None,
    )?;
    print!("\n{}", report.to_table());
    println!("\nartifacts in {}", out.display());
    Ok(())
}
