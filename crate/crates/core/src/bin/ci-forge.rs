use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ci_forge::corpus::NegativeSampling;
use ci_forge::eval::{DeltaMode, Mode, RetrievalMode, Task};
use ci_forge::forge::Selection;
use ci_forge::gateway::GatewayMode;
use ci_forge::pipeline::{Pipeline, PipelineConfig, PipelineError};

/// Build and score privacy-law reasoning datasets.
#[derive(Parser)]
#[command(name = "ci-forge", version)]
struct Cli {
    /// JSON pipeline config; relative paths inside it are taken from its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct GatewayArgs {
    /// live, record or replay.
    #[arg(long)]
    mode: Option<GatewayMode>,
    /// Cassette JSONL of recorded model calls.
    #[arg(long)]
    cassette: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the statute source into a section graph.
    IngestStatute {
        /// Interchange JSON or eCFR XML snapshot.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Turn graph leaves into norms.
    ExtractNorms {
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Type each norm with the model and select permit/forbid seeds.
    ClassifyNorms {
        #[arg(long)]
        norms: Option<PathBuf>,
        #[command(flatten)]
        gateway: GatewayArgs,
    },
    /// Generate, filter and select synthetic cases.
    Synthesize {
        #[arg(long)]
        seeds: Option<PathBuf>,
        #[command(flatten)]
        gateway: GatewayArgs,
        #[arg(long)]
        samples: Option<u32>,
        #[arg(long)]
        no_feature_filter: bool,
        #[arg(long)]
        no_norm_filter: bool,
        #[arg(long)]
        no_conclusion_filter: bool,
        /// Pick a seeded random candidate instead of ranking by diversity.
        #[arg(long)]
        no_diversity: bool,
        /// min-max, highest-rouge or random:<seed>.
        #[arg(long)]
        selection: Option<Selection>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fetch, filter and extract real court cases.
    IngestCap {
        #[arg(long)]
        relevant_snapshot: Option<PathBuf>,
        #[arg(long)]
        irrelevant_snapshot: Option<PathBuf>,
        /// Reviewed annotation-queue lines to apply.
        #[arg(long)]
        overrides: Option<PathBuf>,
        #[command(flatten)]
        gateway: GatewayArgs,
    },
    /// Combine synthetic and real cases into train/test splits.
    Assemble {
        #[arg(long)]
        oversample: bool,
        /// Shuffle negatives with this seed instead of keeping relevance order.
        #[arg(long)]
        random_negatives: Option<u64>,
        #[arg(long)]
        train_negatives: Option<usize>,
        #[arg(long)]
        test_negatives: Option<usize>,
    },
    /// Render cases (or norms, for recitation) as tuning examples.
    Compile {
        #[arg(long)]
        task: Task,
        #[arg(long, default_value = "multi-step")]
        mode: Mode,
        #[arg(long)]
        cases: Option<PathBuf>,
        #[arg(long)]
        norms: Option<PathBuf>,
        #[arg(long = "output")]
        output: Option<PathBuf>,
    },
    /// Score model transcripts against gold cases.
    Evaluate {
        #[arg(long)]
        task: Task,
        #[arg(long, default_value = "multi-step")]
        mode: Mode,
        #[arg(long)]
        gold: PathBuf,
        /// JSONL of {case_id, transcript}.
        #[arg(long)]
        pred: PathBuf,
        /// containment, exact-set or prefix.
        #[arg(long)]
        retrieval: Option<RetrievalMode>,
    },
    /// Per-metric deltas between two reports (a - b).
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Round both reports to two decimals before subtracting.
        #[arg(long)]
        pre_rounded: bool,
    },
}

fn apply_gateway(cfg: &mut PipelineConfig, g: GatewayArgs) {
    if let Some(mode) = g.mode {
        cfg.gateway.mode = mode;
    }
    if let Some(c) = g.cassette {
        cfg.gateway.cassette = Some(c);
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    match &cli.command {
        Command::IngestStatute { snapshot: Some(s) } => cfg.statute.snapshot = Some(s.clone()),
        Command::IngestCap { relevant_snapshot, irrelevant_snapshot, overrides, .. } => {
            if relevant_snapshot.is_some() {
                cfg.cap.relevant_snapshot = relevant_snapshot.clone();
            }
            if irrelevant_snapshot.is_some() {
                cfg.cap.irrelevant_snapshot = irrelevant_snapshot.clone();
            }
            if overrides.is_some() {
                cfg.cap.overrides = overrides.clone();
            }
        }
        _ => {}
    }

    let print_counts = |m: &ci_forge::pipeline::RunManifest| {
        println!("{}", serde_json::to_string_pretty(&m.counts).unwrap_or_default());
    };
    match cli.command {
        Command::IngestStatute { .. } => {
            cfg.validate()?;
            print_counts(&Pipeline::new(cfg).ingest_statute()?);
        }
        Command::ExtractNorms { graph } => print_counts(&Pipeline::new(cfg).extract_norms(graph.as_deref())?),
        Command::ClassifyNorms { norms, gateway } => {
            apply_gateway(&mut cfg, gateway);
            print_counts(&Pipeline::new(cfg).classify_norms(norms.as_deref())?);
        }
        Command::Synthesize {
            seeds,
            gateway,
            samples,
            no_feature_filter,
            no_norm_filter,
            no_conclusion_filter,
            no_diversity,
            selection,
            seed,
        } => {
            apply_gateway(&mut cfg, gateway);
            let s = &mut cfg.synthesis;
            if let Some(n) = samples {
                s.samples_per_norm = n;
            }
            s.feature_filter &= !no_feature_filter;
            s.norm_filter &= !no_norm_filter;
            s.conclusion_filter &= !no_conclusion_filter;
            s.diversity &= !no_diversity;
            if let Some(sel) = selection {
                s.selection = sel;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            cfg.normalize();
            cfg.validate()?;
            print_counts(&Pipeline::new(cfg).synthesize(seeds.as_deref())?);
        }
        Command::IngestCap { gateway, .. } => {
            apply_gateway(&mut cfg, gateway);
            cfg.validate()?;
            print_counts(&Pipeline::new(cfg).ingest_cap()?);
        }
        Command::Assemble { oversample, random_negatives, train_negatives, test_negatives } => {
            let a = &mut cfg.assemble;
            a.oversample |= oversample;
            if let Some(seed) = random_negatives {
                a.negative_sampling = NegativeSampling::Random { seed };
            }
            if train_negatives.is_some() {
                a.train_negatives = train_negatives;
            }
            if test_negatives.is_some() {
                a.test_negatives = test_negatives;
            }
            print_counts(&Pipeline::new(cfg).assemble(None)?);
        }
        Command::Compile { task, mode, cases, norms, output } => {
            let p = Pipeline::new(cfg);
            print_counts(&p.compile(task, mode, cases.as_deref(), norms.as_deref(), output.as_deref())?);
        }
        Command::Evaluate { task, mode, gold, pred, retrieval } => {
            let (report, _) = Pipeline::new(cfg).evaluate(task, mode, &gold, &pred, retrieval)?;
            print!("{}", report.to_table());
        }
        Command::Compare { a, b, pre_rounded } => {
            let mode = if pre_rounded { DeltaMode::PreRounded } else { DeltaMode::FullPrecision };
            let (table, _) = Pipeline::new(cfg).compare(&a, &b, mode)?;
            print!("{}", table.to_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
