//! Tooling for building privacy-law reasoning benchmarks: a hierarchical
//! statute graph, a contextual-integrity flow checker, a recorded model
//! gateway, case synthesis with filtering and diversity selection, real-case
//! ingestion, and evaluation scoring.

pub mod ci;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod forge;
pub mod gateway;
pub mod labels;
pub mod norm_id;
pub mod pipeline;
pub mod qa;
pub mod statute;

pub use error::{CorpusError, EvalError, FlowError, GatewayError, IdError, ParseError, StatuteError};
pub use labels::{Applicability, Polarity, Verdict};
pub use norm_id::NormId;

/// Names a law in prompts.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct LawProfile {
    /// Short name, also the synthetic root id.
    pub name: String,
    /// Title used in prompt text.
    pub title: String,
    /// Shape of a section id, shown to the model as an example.
    pub id_example: String,
}

impl Default for LawProfile {
    fn default() -> Self {
        LawProfile {
            name: "HIPAA".into(),
            title: "HIPAA Privacy Rule".into(),
            id_example: "164.xxx".into(),
        }
    }
}
