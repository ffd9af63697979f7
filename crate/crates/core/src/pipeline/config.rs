use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::corpus::{AssembleConfig, FetchLimits, CAP_API_BASE};
use crate::forge::SynthesisConfig;
use crate::gateway::GatewayMode;
use crate::statute::ECFR_BASE;
use crate::LawProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatuteSource {
    /// Interchange JSON, a graph export, or eCFR XML (by extension).
    pub snapshot: Option<PathBuf>,
    /// Versioner API base used when no snapshot is given.
    pub url: String,
    pub date: String,
    pub title: u32,
    pub part: u32,
    /// Subpart letters to keep; empty keeps all.
    pub subparts: Vec<String>,
}

impl Default for StatuteSource {
    fn default() -> Self {
        StatuteSource {
            snapshot: None,
            url: ECFR_BASE.into(),
            date: "2024-01-01".into(),
            title: 45,
            part: 164,
            subparts: vec!["E".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySettings {
    pub mode: GatewayMode,
    pub cassette: Option<PathBuf>,
    /// Overrides the environment's endpoint.
    pub api_base: Option<String>,
    pub model: Option<String>,
    pub max_in_flight: usize,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        GatewaySettings { mode: GatewayMode::Replay, cassette: None, api_base: None, model: None, max_in_flight: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapSettings {
    pub relevant_keyword: String,
    pub irrelevant_keyword: String,
    pub relevant_snapshot: Option<PathBuf>,
    pub irrelevant_snapshot: Option<PathBuf>,
    pub api_base: String,
    pub limits: FetchLimits,
    /// Reviewed annotation-queue lines that replace or drop extractions.
    pub overrides: Option<PathBuf>,
}

impl Default for CapSettings {
    fn default() -> Self {
        CapSettings {
            relevant_keyword: "HIPAA Privacy Rule".into(),
            irrelevant_keyword: "privacy violation".into(),
            relevant_snapshot: None,
            irrelevant_snapshot: None,
            api_base: CAP_API_BASE.into(),
            limits: FetchLimits::default(),
            overrides: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySettings {
    pub retry_budget: u32,
    pub max_tokens: u32,
}

impl Default for ClassifySettings {
    fn default() -> Self {
        ClassifySettings { retry_budget: 2, max_tokens: 1024 }
    }
}

/// Everything a run depends on. Loaded from `--config` JSON; missing
/// sections take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub law: LawProfile,
    pub statute: StatuteSource,
    pub gateway: GatewaySettings,
    pub classify: ClassifySettings,
    pub synthesis: SynthesisConfig,
    pub cap: CapSettings,
    pub assemble: AssembleConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            law: LawProfile::default(),
            statute: StatuteSource::default(),
            gateway: GatewaySettings::default(),
            classify: ClassifySettings::default(),
            synthesis: SynthesisConfig::default(),
            cap: CapSettings::default(),
            assemble: AssembleConfig::default(),
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl PipelineConfig {
    /// Parses JSON; relative paths are taken from `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| PipelineError::Config(format!("config: {e}")))?;
        cfg.resolve_paths(base);
        cfg.normalize();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.statute.snapshot);
        resolve(base, &mut self.gateway.cassette);
        resolve(base, &mut self.cap.relevant_snapshot);
        resolve(base, &mut self.cap.irrelevant_snapshot);
        resolve(base, &mut self.cap.overrides);
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
    }

    /// Copies shared settings into the sections that carry their own copy.
    pub fn normalize(&mut self) {
        self.synthesis.law = self.law.clone();
        self.synthesis.seed = self.seed;
    }

    /// Input files named in the config must exist.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let inputs = [
            ("statute.snapshot", &self.statute.snapshot),
            ("cap.relevant_snapshot", &self.cap.relevant_snapshot),
            ("cap.irrelevant_snapshot", &self.cap.irrelevant_snapshot),
            ("cap.overrides", &self.cap.overrides),
        ];
        for (key, path) in inputs {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(PipelineError::Config(format!("{key}: {} does not exist", p.display())));
                }
            }
        }
        if self.synthesis.samples_per_norm == 0 {
            return Err(PipelineError::Config("synthesis.samples_per_norm must be at least 1".into()));
        }
        Ok(())
    }

    /// Checked only by subcommands that talk to a model.
    pub fn validate_gateway(&self) -> Result<(), PipelineError> {
        match (&self.gateway.mode, &self.gateway.cassette) {
            (GatewayMode::Replay, None) => Err(PipelineError::Config("replay mode needs a cassette (--cassette)".into())),
            (GatewayMode::Replay, Some(p)) if !p.is_file() => {
                Err(PipelineError::Config(format!("cassette {} does not exist", p.display())))
            }
            _ => Ok(()),
        }
    }

    /// SHA-256 of the canonical JSON form, leaving out where outputs go.
    pub fn hash(&self) -> String {
        let mut cfg = self.clone();
        cfg.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&cfg).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("s.json"), "{}").unwrap();
        let cfg = PipelineConfig::from_json(
            r#"{"statute": {"snapshot": "s.json"}, "synthesis": {"samples_per_norm": 3}, "seed": 5}"#,
            dir.path(),
        )
        .unwrap();
        assert_eq!(cfg.statute.snapshot.as_deref(), Some(dir.path().join("s.json").as_path()));
        assert_eq!(cfg.synthesis.samples_per_norm, 3);
        assert_eq!(cfg.synthesis.seed, 5);
        assert_eq!(cfg.output_dir, dir.path().join("out"));
        assert_eq!(cfg.hash(), cfg.clone().hash());
    }

    #[test]
    fn rejects_bad_configs() {
        let here = Path::new(".");
        assert!(matches!(PipelineConfig::from_json(r#"{"bogus": 1}"#, here), Err(PipelineError::Config(_))));
        assert!(PipelineConfig::from_json(r#"{"statute": {"snapshot": "/no/such/file"}}"#, here).is_err());
        let cfg = PipelineConfig::from_json("{}", here).unwrap();
        assert!(matches!(cfg.validate_gateway(), Err(PipelineError::Config(_))));
        let live = PipelineConfig::from_json(r#"{"gateway": {"mode": "live"}}"#, here).unwrap();
        assert!(live.validate_gateway().is_ok());
    }
}
