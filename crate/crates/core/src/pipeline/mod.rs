//! File-to-file stages behind the command line. Each stage reads artifacts
//! from the output directory (or explicit paths), writes its own, and leaves
//! a `<stage>.manifest.json` with the config hash, input digests and counts.

mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

pub use config::{CapSettings, ClassifySettings, GatewaySettings, PipelineConfig, StatuteSource};

use crate::corpus::{
    self, apply_overrides, extract_all, fetch_cases, length_filter, read_overrides, AssembleConfig, CapClient, CaseSource,
    Extraction, ENV_CAP_KEY,
};
use crate::error::{CorpusError, GatewayError};
use crate::eval::{
    self, align_transcripts, compare_reports, compile_example, norm_lookup, parse_judgment, recitation_example, score, DeltaMode,
    EvalReport, Mode, RetrievalMode, ScoreOptions, Task,
};
use crate::forge::{read_cases, run_synthesis, Case, CaseSet};
use crate::gateway::{GatewayConfig, HttpTransport, ModelGateway, ReqwestTransport};
use crate::labels::Verdict;
use crate::norm_id::NormId;
use crate::statute::{self, classify_norms, ecfr, extract_norms, parse_statute, seed_norms, ClassifyOptions, Norm, StatuteGraph};

pub const STATUTE_GRAPH: &str = "statute_graph.json";
pub const NORMS: &str = "norms.jsonl";
pub const CLASSIFIED_NORMS: &str = "classified_norms.jsonl";
pub const SEED_NORMS: &str = "seed_norms.jsonl";
pub const SYNTHETIC_CASES: &str = "synthetic_cases.jsonl";
pub const CANDIDATE_POOL: &str = "candidate_pool.jsonl";
pub const SYNTHESIS_REPORT: &str = "synthesis_report.json";
pub const REAL_APPLICABLE: &str = "real_applicable.jsonl";
pub const REAL_IRRELEVANT: &str = "real_irrelevant.jsonl";
pub const ANNOTATION_QUEUE: &str = "annotation_queue.jsonl";
pub const DATASET_DIR: &str = "dataset";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const COMPARISON_JSON: &str = "comparison.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    /// Bad configuration or usage; exit status 2.
    #[error("{0}")]
    Config(String),
    /// Anything that went wrong while running; exit status 1.
    #[error("{0:#}")]
    Runtime(#[from] anyhow::Error),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Runtime(_) => 1,
        }
    }
}

impl From<GatewayError> for PipelineError {
    fn from(e: GatewayError) -> Self {
        if e.is_configuration() {
            PipelineError::Config(e.to_string())
        } else {
            PipelineError::Runtime(e.into())
        }
    }
}

impl From<CorpusError> for PipelineError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Gateway(g) => g.into(),
            CorpusError::SnapshotMissing(p) => PipelineError::Config(format!("snapshot not found: {}", p.display())),
            other => PipelineError::Runtime(other.into()),
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

/// What a stage read and wrote. No timestamps, so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_hash: String,
    /// Input path to SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub counts: serde_json::Value,
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn read_text(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?)
}

fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    items.iter().map(|i| serde_json::to_string(i).expect("item serializes") + "\n").collect()
}

fn from_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| anyhow!("{} line {}: {e}", path.display(), n + 1).into())
        })
        .collect()
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

fn cases_from(path: &Path) -> Result<Vec<Case>> {
    read_cases(&read_text(path)?).map_err(|e| anyhow!("{}: {e}", path.display()).into())
}

fn name_of(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Runs stages against one configuration.
pub struct Pipeline {
    cfg: PipelineConfig,
    transport: Option<Arc<dyn HttpTransport>>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Self {
        Pipeline { cfg, transport: None }
    }

    /// Uses `transport` for every HTTP call instead of a real client.
    pub fn with_transport(mut self, transport: Arc<dyn HttpTransport>) -> Self {
        self.transport = Some(transport);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn http(&self) -> Result<Arc<dyn HttpTransport>> {
        match &self.transport {
            Some(t) => Ok(t.clone()),
            None => Ok(Arc::new(ReqwestTransport::new(std::time::Duration::from_secs(120)).map_err(|e| anyhow!(e))?)),
        }
    }

    fn gateway(&self) -> Result<ModelGateway> {
        self.cfg.validate_gateway()?;
        let g = &self.cfg.gateway;
        let mut config = GatewayConfig::from_env();
        if let Some(base) = &g.api_base {
            config.api_base = Some(base.clone());
        }
        if let Some(model) = &g.model {
            config.model = model.clone();
        }
        config.max_in_flight = g.max_in_flight.max(1);
        Ok(ModelGateway::new(g.mode, config, g.cassette.as_deref(), self.transport.clone())?)
    }

    fn finish(
        &self,
        subcommand: &str,
        inputs: &[&Path],
        outputs: &[&Path],
        counts: serde_json::Value,
    ) -> Result<RunManifest> {
        let mut digests = BTreeMap::new();
        for p in inputs {
            // artifacts of earlier stages are keyed relative to the output dir
            let key = p.strip_prefix(&self.cfg.output_dir).unwrap_or(p);
            digests.insert(key.display().to_string(), file_digest(p)?);
        }
        let manifest = RunManifest {
            subcommand: subcommand.into(),
            config_hash: self.cfg.hash(),
            inputs: digests,
            outputs: outputs.iter().map(|p| name_of(p)).collect(),
            counts,
        };
        write_text(&self.out(&format!("{subcommand}.manifest.json")), &pretty(&manifest))?;
        Ok(manifest)
    }

    fn load_statute(&self) -> Result<(statute::StatuteSourceDocument, Option<PathBuf>)> {
        let src = &self.cfg.statute;
        let subparts: Vec<&str> = src.subparts.iter().map(String::as_str).collect();
        match &src.snapshot {
            Some(path) => {
                let text = read_text(path)?;
                let doc = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml")) {
                    ecfr::document_from_xml(&text, &self.cfg.law, &subparts)
                        .map_err(|e| anyhow!("{}: {e}", path.display()))?
                } else {
                    statute::StatuteSourceDocument::from_json(&text).with_context(|| format!("parsing {}", path.display()))?
                };
                Ok((doc, Some(path.clone())))
            }
            None => {
                let xml = ecfr::fetch_part_xml(self.http()?.as_ref(), &src.url, &src.date, src.title, src.part)
                    .map_err(|e| anyhow!("statute fetch: {e}"))?;
                let doc = ecfr::document_from_xml(&xml, &self.cfg.law, &subparts).map_err(|e| anyhow!("statute XML: {e}"))?;
                Ok((doc, None))
            }
        }
    }

    /// Statute source to a validated graph export.
    pub fn ingest_statute(&self) -> Result<RunManifest> {
        let (doc, input) = self.load_statute()?;
        let graph = parse_statute(&doc).map_err(|e| anyhow!("statute: {e}"))?;
        graph.validate().map_err(|e| anyhow!("statute: {e}"))?;
        let out = self.out(STATUTE_GRAPH);
        write_text(&out, &pretty(&graph.to_export()))?;
        let counts = json!({
            "nodes": graph.nodes().len(),
            "leaves": graph.leaves().count(),
            "subsume_edges": graph.subsume_edges().len(),
            "refer_edges": graph.refer_edges().len(),
            "dangling_refs": graph.dangling_refs().len(),
        });
        let inputs: Vec<&Path> = input.as_deref().into_iter().collect();
        self.finish("ingest-statute", &inputs, &[&out], counts)
    }

    fn load_graph(&self, path: &Path) -> Result<StatuteGraph> {
        let export: statute::GraphExport =
            serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
        Ok(parse_statute(&export.into_document()).map_err(|e| anyhow!("{}: {e}", path.display()))?)
    }

    /// One norm per leaf of the graph.
    pub fn extract_norms(&self, graph: Option<&Path>) -> Result<RunManifest> {
        let input = graph.map(Path::to_path_buf).unwrap_or_else(|| self.out(STATUTE_GRAPH));
        let norms = extract_norms(&self.load_graph(&input)?);
        let out = self.out(NORMS);
        write_text(&out, &to_jsonl(&norms))?;
        self.finish("extract-norms", &[&input], &[&out], json!({ "norms": norms.len() }))
    }

    /// Types every norm through the gateway and picks the seeds.
    pub fn classify_norms(&self, norms: Option<&Path>) -> Result<RunManifest> {
        let input = norms.map(Path::to_path_buf).unwrap_or_else(|| self.out(NORMS));
        let gateway = self.gateway()?;
        let norms: Vec<Norm> = from_jsonl(&input)?;
        let opts = ClassifyOptions {
            law: self.cfg.law.clone(),
            retry_budget: self.cfg.classify.retry_budget,
            max_tokens: self.cfg.classify.max_tokens,
        };
        let classified = classify_norms(&norms, &gateway, &opts)?;
        let report = seed_norms(&classified);
        let (out_all, out_seeds) = (self.out(CLASSIFIED_NORMS), self.out(SEED_NORMS));
        write_text(&out_all, &to_jsonl(&classified))?;
        write_text(&out_seeds, &to_jsonl(&report.seeds))?;
        let mut by_type: BTreeMap<&str, usize> = BTreeMap::new();
        for n in &classified {
            for t in &n.types {
                *by_type.entry(t.as_str()).or_default() += 1;
            }
        }
        let polarity = |p| report.seeds.iter().filter(|s| s.polarity == Some(p)).count();
        let counts = json!({
            "norms": classified.len(),
            "by_type": by_type,
            "classification_failed": classified.iter().filter(|n| n.classification_failed).count(),
            "seeds": report.seeds.len(),
            "permit_seeds": polarity(crate::Polarity::Permit),
            "forbid_seeds": polarity(crate::Polarity::Forbid),
            "conflicting": report.conflicting,
            "unaddressable": report.unaddressable,
        });
        self.finish("classify-norms", &[&input], &[&out_all, &out_seeds], counts)
    }

    /// Generates, filters and selects one synthetic case per seed norm.
    pub fn synthesize(&self, seeds: Option<&Path>) -> Result<RunManifest> {
        let input = seeds.map(Path::to_path_buf).unwrap_or_else(|| self.out(SEED_NORMS));
        let gateway = self.gateway()?;
        let seeds: Vec<Norm> = from_jsonl(&input)?;
        let run = run_synthesis(&seeds, &gateway, &self.cfg.synthesis)?;
        let (out_cases, out_pool, out_report) =
            (self.out(SYNTHETIC_CASES), self.out(CANDIDATE_POOL), self.out(SYNTHESIS_REPORT));
        write_text(&out_cases, &run.cases.to_jsonl())?;
        let pool: Vec<&Case> = run.pool.values().flatten().collect();
        write_text(&out_pool, &to_jsonl(&pool))?;
        write_text(&out_report, &pretty(&run.manifest))?;
        let unfilled = run
            .manifest
            .norms
            .iter()
            .filter(|n| !matches!(n.disposition, crate::forge::Disposition::Selected { .. }))
            .count();
        let counts = json!({
            "seeds": seeds.len(),
            "stages": run.manifest.stages,
            "selected": run.cases.len(),
            "unfilled": unfilled,
        });
        self.finish("synthesize", &[&input], &[&out_cases, &out_pool, &out_report], counts)
    }

    fn fetch(&self, keyword: &str, snapshot: Option<&Path>) -> Result<Vec<corpus::RealCaseRecord>> {
        let limits = self.cfg.cap.limits;
        let records = match snapshot {
            Some(p) => fetch_cases(keyword, CaseSource::Snapshot(p), limits)?,
            None => {
                let token = std::env::var(ENV_CAP_KEY).ok().filter(|t| !t.is_empty());
                let client = CapClient::new(self.http()?, self.cfg.cap.api_base.clone(), token);
                let records = fetch_cases(keyword, CaseSource::Api(&client), limits)?;
                let slug: String =
                    keyword.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect();
                write_text(&self.out(&format!("cap_{slug}.jsonl")), &corpus::write_snapshot(&records))?;
                records
            }
        };
        Ok(records)
    }

    /// Fetches, length-filters and extracts real cases for both keywords,
    /// then routes them by extracted conclusion.
    pub fn ingest_cap(&self) -> Result<RunManifest> {
        let cap = &self.cfg.cap;
        let gateway = self.gateway()?;
        let mut counts = serde_json::Map::new();
        let mut queries = serde_json::Map::new();
        let mut extractions: Vec<Extraction> = Vec::new();
        let mut seen = BTreeSet::new();
        let mut failures = Vec::new();
        for (key, keyword, snapshot) in [
            ("relevant", &cap.relevant_keyword, cap.relevant_snapshot.as_deref()),
            ("irrelevant", &cap.irrelevant_keyword, cap.irrelevant_snapshot.as_deref()),
        ] {
            let fetched = self.fetch(keyword, snapshot)?;
            let fetched_n = fetched.len();
            let kept: Vec<_> = length_filter(fetched).into_iter().filter(|r| seen.insert(r.source_id.clone())).collect();
            let mut ok = 0;
            for (record, result) in kept.iter().zip(extract_all(&kept, &gateway, &self.cfg.law)) {
                match result {
                    Ok(e) => {
                        ok += 1;
                        extractions.push(e);
                    }
                    Err(CorpusError::Gateway(g)) if g.is_configuration() => return Err(g.into()),
                    Err(e) => failures.push(json!({ "source_id": record.source_id, "error": e.to_string() })),
                }
            }
            queries.insert(key.into(), json!({ "keyword": keyword, "fetched": fetched_n, "length_kept": kept.len(), "extracted": ok }));
        }

        counts.insert("queries".into(), serde_json::Value::Object(queries));

        let mut inputs: Vec<PathBuf> = [&cap.relevant_snapshot, &cap.irrelevant_snapshot].into_iter().flatten().cloned().collect();
        if let Some(path) = &cap.overrides {
            let overrides = read_overrides(&read_text(path)?).map_err(|e| anyhow!("{}: {e}", path.display()))?;
            extractions = apply_overrides(extractions, &overrides);
            inputs.push(path.clone());
        }

        let queue: Vec<&Extraction> = extractions.iter().filter(|e| !e.flags.is_empty()).collect();
        let mut applicable = Vec::new();
        let mut irrelevant = Vec::new();
        let mut unlabeled = 0;
        for e in &extractions {
            match e.case.comp_conclusion {
                Some(Verdict::Permit | Verdict::Forbid) => applicable.push(&e.case),
                Some(Verdict::NotApplicable) => irrelevant.push(&e.case),
                None => unlabeled += 1,
            }
        }
        let (out_a, out_i, out_q) = (self.out(REAL_APPLICABLE), self.out(REAL_IRRELEVANT), self.out(ANNOTATION_QUEUE));
        write_text(&out_a, &to_jsonl(&applicable))?;
        write_text(&out_i, &to_jsonl(&irrelevant))?;
        write_text(&out_q, &to_jsonl(&queue))?;
        counts.insert("applicable".into(), json!(applicable.len()));
        counts.insert("irrelevant".into(), json!(irrelevant.len()));
        counts.insert("unlabeled".into(), json!(unlabeled));
        counts.insert("flagged".into(), json!(queue.len()));
        counts.insert("failures".into(), json!(failures));
        let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
        self.finish("ingest-cap", &inputs, &[&out_a, &out_i, &out_q], serde_json::Value::Object(counts))
    }

    /// Builds the four splits from the synthetic and real case files.
    pub fn assemble(&self, cfg: Option<&AssembleConfig>) -> Result<RunManifest> {
        let cfg = cfg.unwrap_or(&self.cfg.assemble);
        let (p_syn, p_pool, p_app, p_irr) =
            (self.out(SYNTHETIC_CASES), self.out(CANDIDATE_POOL), self.out(REAL_APPLICABLE), self.out(REAL_IRRELEVANT));
        let synthetic = CaseSet::from_cases(cases_from(&p_syn)?);
        let mut inputs: Vec<&Path> = vec![&p_syn, &p_app, &p_irr];
        let pool = if cfg.oversample && p_pool.is_file() {
            inputs.push(&p_pool);
            let mut by_norm: BTreeMap<NormId, Vec<Case>> = BTreeMap::new();
            for c in cases_from(&p_pool)? {
                if let Some(id) = c.seed_norm_id.clone() {
                    by_norm.entry(id).or_default().push(c);
                }
            }
            Some(by_norm)
        } else {
            None
        };
        let bundle = corpus::assemble(&synthetic, pool.as_ref(), &cases_from(&p_app)?, &cases_from(&p_irr)?, cfg)
            .map_err(|e| PipelineError::Runtime(e.into()))?;
        let dir = self.out(DATASET_DIR);
        bundle.write_to(&dir).with_context(|| format!("writing {}", dir.display()))?;
        let outputs: Vec<PathBuf> =
            corpus::BUNDLE_FILES.iter().chain(["split_manifest.json"].iter()).map(|f| dir.join(f)).collect();
        let outputs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
        let counts = serde_json::to_value(&bundle.split_manifest).expect("manifest serializes");
        self.finish("assemble", &inputs, &outputs, counts)
    }

    /// Renders tuning examples. Recitation ignores `cases` and uses every norm.
    pub fn compile(&self, task: Task, mode: Mode, cases: Option<&Path>, norms: Option<&Path>, out: Option<&Path>) -> Result<RunManifest> {
        let norms_path = norms.map(Path::to_path_buf).unwrap_or_else(|| self.out(NORMS));
        let needs_norms = task == Task::Recitation || (task == Task::Compliance && mode == Mode::MultiStep);
        let norm_list: Vec<Norm> = if needs_norms { from_jsonl(&norms_path)? } else { Vec::new() };
        let lookup = norm_lookup(&norm_list);
        let mut inputs: Vec<PathBuf> = Vec::new();
        if needs_norms {
            inputs.push(norms_path);
        }
        let examples = if task == Task::Recitation {
            norm_list
                .iter()
                .filter_map(|n| n.norm_id())
                .map(|id| recitation_example(id, &lookup[id], &self.cfg.law))
                .collect()
        } else {
            let path = cases.map(Path::to_path_buf).unwrap_or_else(|| {
                self.out(DATASET_DIR).join(format!("{}_train.jsonl", task.as_str()))
            });
            let cases = cases_from(&path)?;
            inputs.push(path);
            cases
                .iter()
                .enumerate()
                .map(|(i, c)| compile_example(c, task, mode, &lookup, &self.cfg.law).with_context(|| format!("case {i}")))
                .collect::<anyhow::Result<Vec<_>>>()?
        };
        let mode_name = match mode {
            Mode::Vanilla => "vanilla",
            Mode::MultiStep => "multi_step",
        };
        let out = out.map(Path::to_path_buf).unwrap_or_else(|| self.out(&format!("{}_{mode_name}.jsonl", task.as_str())));
        write_text(&out, &eval::training_jsonl(&examples))?;
        let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
        self.finish("compile", &inputs, &[&out], json!({ "examples": examples.len() }))
    }

    /// Scores transcripts against gold cases.
    pub fn evaluate(
        &self,
        task: Task,
        mode: Mode,
        gold: &Path,
        pred: &Path,
        retrieval: Option<RetrievalMode>,
    ) -> Result<(EvalReport, RunManifest)> {
        if task == Task::Recitation {
            return Err(PipelineError::Config("recitation is not a scored task".into()));
        }
        let golds = cases_from(gold)?;
        let transcripts = align_transcripts(&read_text(pred)?, golds.len()).map_err(|e| anyhow!("{}: {e}", pred.display()))?;
        let judgments: Vec<_> = transcripts.iter().map(|t| parse_judgment(t, task, mode)).collect();
        let retrieval = match (task, mode, retrieval) {
            (Task::Compliance, _, Some(r)) => Some(r),
            (Task::Compliance, Mode::MultiStep, None) => Some(RetrievalMode::Containment),
            _ => None,
        };
        let report = score(&judgments, &golds, task, ScoreOptions { retrieval }).map_err(|e| anyhow!(e))?;
        let (out_json, out_txt) = (self.out(REPORT_JSON), self.out(REPORT_TXT));
        write_text(&out_json, &pretty(&report))?;
        write_text(&out_txt, &report.to_table())?;
        let counts = json!({ "cases": golds.len(), "unknown": report.unknown });
        let manifest = self.finish("evaluate", &[gold, pred], &[&out_json, &out_txt], counts)?;
        Ok((report, manifest))
    }

    /// Per-metric differences between two saved reports.
    pub fn compare(&self, a: &Path, b: &Path, mode: DeltaMode) -> Result<(eval::DeltaTable, RunManifest)> {
        let load = |p: &Path| -> Result<EvalReport> {
            Ok(serde_json::from_str(&read_text(p)?).with_context(|| format!("parsing {}", p.display()))?)
        };
        let table = compare_reports(&load(a)?, &load(b)?, mode).map_err(|e| PipelineError::Config(e.to_string()))?;
        let out = self.out(COMPARISON_JSON);
        write_text(&out, &pretty(&table))?;
        let manifest = self.finish("compare", &[a, b], &[&out], json!({ "metrics": table.rows.len() }))?;
        Ok((table, manifest))
    }
}
