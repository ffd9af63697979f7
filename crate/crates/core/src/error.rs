use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdError {
    #[error("malformed section identifier: {0}")]
    Malformed(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatuteError {
    #[error("statute document contains no nodes")]
    EmptyDocument,
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),
    #[error("malformed node id `{0}`")]
    MalformedId(String),
    #[error("leaf node `{0}` has no content")]
    EmptyLeaf(String),
    #[error("invalid document structure: {0}")]
    Structure(String),
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no API credential configured (set CI_FORGE_API_KEY)")]
    AuthMissing,
    #[error("no API endpoint configured (set CI_FORGE_API_BASE)")]
    EndpointMissing,
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("no cassette entry for request {fingerprint}")]
    ReplayMiss { fingerprint: String },
    #[error("malformed response from chat endpoint: {0}")]
    MalformedRemoteResponse(String),
    #[error("chat endpoint returned HTTP {status} after {attempts} attempts")]
    Http { status: u16, attempts: u32 },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("invalid chat request: {0}")]
    InvalidRequest(String),
    #[error("cassette {path}: {message}")]
    Cassette { path: PathBuf, message: String },
}

impl GatewayError {
    /// Configuration problems abort a batch; everything else is per-item.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            GatewayError::AuthMissing | GatewayError::EndpointMissing | GatewayError::Cassette { .. }
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FlowError {
    #[error("information flow field `{0}` is empty or `None`")]
    MissingField(&'static str),
    #[error("predicate for {norm}: {message}")]
    InvalidPredicate { norm: String, message: String },
    #[error("role alias cycle through `{0}`")]
    AliasCycle(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("unparseable model response: {0}")]
    UnparseableResponse(String),
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("case-law request failed: {0}")]
    Network(String),
    #[error("snapshot not found: {}", .0.display())]
    SnapshotMissing(PathBuf),
    #[error("snapshot {path}: {message}")]
    Snapshot { path: PathBuf, message: String },
    #[error("need {needed} irrelevant cases but only {available} are available")]
    InsufficientNegatives { needed: usize, available: usize },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("no norm text available for `{0}`")]
    MissingNorm(String),
    #[error("{preds} predictions for {golds} gold cases")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("cannot compare a {a} report with a {b} report")]
    TaskMismatch { a: String, b: String },
    #[error("gold case {0} has no label for this task")]
    MissingGold(usize),
    #[error("case has no {0} label")]
    MissingLabel(&'static str),
    #[error("transcript file: {0}")]
    Transcripts(String),
}
