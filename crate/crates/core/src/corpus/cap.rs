//! Client for the case-law search API (v1 JSON, page-linked results).

use std::sync::Arc;

use serde::Deserialize;

use super::{FetchLimits, RealCaseRecord};
use crate::error::CorpusError;
use crate::gateway::HttpTransport;

pub const CAP_API_BASE: &str = "https://api.case.law/v1";
pub const ENV_CAP_KEY: &str = "CI_FORGE_CAP_KEY";

#[derive(Deserialize)]
struct Page {
    #[serde(default)]
    next: Option<String>,
    #[serde(default)]
    results: Vec<ApiCase>,
}

#[derive(Deserialize)]
struct ApiCase {
    id: serde_json::Value,
    #[serde(default)]
    court: Option<ApiCourt>,
    #[serde(default)]
    casebody: Option<ApiBody>,
}

#[derive(Deserialize)]
struct ApiCourt {
    #[serde(default)]
    name: String,
}

#[derive(Deserialize)]
struct ApiBody {
    #[serde(default)]
    data: Option<ApiBodyData>,
}

#[derive(Deserialize)]
struct ApiBodyData {
    #[serde(default)]
    head_matter: String,
    #[serde(default)]
    opinions: Vec<ApiOpinion>,
}

#[derive(Deserialize)]
struct ApiOpinion {
    #[serde(default)]
    text: String,
}

impl ApiCase {
    fn into_record(self, keyword: &str) -> RealCaseRecord {
        let id = match self.id {
            serde_json::Value::String(s) => s,
            other => other.to_string(),
        };
        let text = self
            .casebody
            .and_then(|b| b.data)
            .map(|d| {
                let mut parts = vec![d.head_matter];
                parts.extend(d.opinions.into_iter().map(|o| o.text));
                parts.retain(|p| !p.trim().is_empty());
                parts.join("\n\n")
            })
            .unwrap_or_default();
        RealCaseRecord::new(id, self.court.map(|c| c.name).unwrap_or_default(), text, keyword)
    }
}

pub struct CapClient {
    transport: Arc<dyn HttpTransport>,
    base: String,
    token: Option<String>,
}

impl CapClient {
    pub fn new(transport: Arc<dyn HttpTransport>, base: impl Into<String>, token: Option<String>) -> Self {
        CapClient { transport, base: base.into(), token }
    }

    fn first_page_url(&self, keyword: &str, page_size: usize) -> Result<String, CorpusError> {
        let base = format!("{}/cases/", self.base.trim_end_matches('/'));
        let params = [
            ("search", keyword.to_string()),
            ("full_case", "true".to_string()),
            ("ordering", "relevance".to_string()),
            ("page_size", page_size.to_string()),
        ];
        reqwest::Url::parse_with_params(&base, &params)
            .map(String::from)
            .map_err(|e| CorpusError::Network(format!("bad base url {base}: {e}")))
    }

    /// Follows `next` links until `max_results` records or the last page.
    pub fn search(&self, keyword: &str, limits: FetchLimits) -> Result<Vec<RealCaseRecord>, CorpusError> {
        let mut url = Some(self.first_page_url(keyword, limits.page_size.max(1))?);
        let mut out = Vec::new();
        while let Some(u) = url.take() {
            let reply = self.transport.get(&u, self.token.as_deref()).map_err(CorpusError::Network)?;
            if !reply.is_success() {
                return Err(CorpusError::Network(format!("{u}: HTTP {}", reply.status)));
            }
            let page: Page = serde_json::from_str(&reply.body).map_err(|e| CorpusError::Network(format!("{u}: {e}")))?;
            out.extend(page.results.into_iter().map(|c| c.into_record(keyword)));
            if out.len() >= limits.max_results {
                out.truncate(limits.max_results);
                break;
            }
            url = page.next.filter(|n| !n.is_empty());
        }
        Ok(out)
    }
}
