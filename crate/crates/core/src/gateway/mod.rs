//! Chat-completion access with live, record, and replay modes.
//!
//! Every model call in the pipeline goes through [`ModelGateway::complete`].
//! In replay mode responses come from a [`Cassette`] keyed by a request
//! fingerprint, so whole runs reproduce offline byte-for-byte.

mod cassette;
pub mod http;

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cassette::{Cassette, CassetteEntry};
pub use http::{HttpReply, HttpTransport, ReqwestTransport};

use crate::error::GatewayError;

pub const ENV_API_BASE: &str = "CI_FORGE_API_BASE";
pub const ENV_API_KEY: &str = "CI_FORGE_API_KEY";
pub const ENV_MODEL: &str = "CI_FORGE_MODEL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
    pub user_prompt: String,
    pub temperature: f64,
    pub n_samples: u32,
    pub max_tokens: u32,
    /// Grouping label; not part of the fingerprint.
    #[serde(default)]
    pub tag: String,
}

#[derive(Serialize)]
struct FingerprintFields<'a> {
    system_prompt: &'a Option<String>,
    user_prompt: &'a str,
    temperature: f64,
    n_samples: u32,
    max_tokens: u32,
}

impl ChatRequest {
    pub fn new(user_prompt: impl Into<String>) -> Self {
        Self {
            system_prompt: None,
            user_prompt: user_prompt.into(),
            temperature: 0.0,
            n_samples: 1,
            max_tokens: 1024,
            tag: String::new(),
        }
    }

    pub fn temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn samples(mut self, n: u32) -> Self {
        self.n_samples = n;
        self
    }

    pub fn max_tokens(mut self, n: u32) -> Self {
        self.max_tokens = n;
        self
    }

    pub fn tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    pub fn system(mut self, prompt: impl Into<String>) -> Self {
        self.system_prompt = Some(prompt.into());
        self
    }

    /// SHA-256 over the JSON encoding of every field except `tag`.
    pub fn fingerprint(&self) -> String {
        let fields = FingerprintFields {
            system_prompt: &self.system_prompt,
            user_prompt: &self.user_prompt,
            temperature: self.temperature,
            n_samples: self.n_samples,
            max_tokens: self.max_tokens,
        };
        let bytes = serde_json::to_vec(&fields).expect("request fields serialize");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.user_prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("empty user prompt".into()));
        }
        if self.n_samples == 0 || self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("n_samples and max_tokens must be positive".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest("temperature must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub texts: Vec<String>,
    pub model_name: String,
    #[serde(default)]
    pub token_usage: TokenUsage,
    /// Replay returned fewer samples than requested.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    Live,
    Record,
    Replay,
}

impl std::str::FromStr for GatewayMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "live" => Ok(GatewayMode::Live),
            "record" => Ok(GatewayMode::Record),
            "replay" => Ok(GatewayMode::Replay),
            other => Err(format!("unknown gateway mode `{other}` (live, record, replay)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub api_base: Option<String>,
    pub api_key: Option<String>,
    pub model: String,
    /// Retries after the first attempt.
    pub retry_budget: u32,
    pub backoff_base: Duration,
    pub backoff_cap: Duration,
    pub max_in_flight: usize,
    pub timeout: Duration,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            api_base: None,
            api_key: None,
            model: "gpt-4".into(),
            retry_budget: 3,
            backoff_base: Duration::from_secs(1),
            backoff_cap: Duration::from_secs(30),
            max_in_flight: 4,
            timeout: Duration::from_secs(120),
        }
    }
}

impl GatewayConfig {
    pub fn from_env() -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.trim().is_empty());
        let mut cfg = Self { api_base: var(ENV_API_BASE), api_key: var(ENV_API_KEY), ..Self::default() };
        if let Some(model) = var(ENV_MODEL) {
            cfg.model = model;
        }
        cfg
    }

    /// Delay before retry number `retry` (0-based): base·2^retry, capped.
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry);
        self.backoff_base.saturating_mul(factor).min(self.backoff_cap)
    }
}

pub struct ModelGateway {
    mode: GatewayMode,
    config: GatewayConfig,
    cassette: Mutex<Cassette>,
    transport: Option<Arc<dyn HttpTransport>>,
    network_calls: AtomicUsize,
}

impl ModelGateway {
    /// A replay-only gateway over an in-memory or loaded cassette.
    pub fn replay(cassette: Cassette) -> Self {
        Self {
            mode: GatewayMode::Replay,
            config: GatewayConfig::default(),
            cassette: Mutex::new(cassette),
            transport: None,
            network_calls: AtomicUsize::new(0),
        }
    }

    pub fn replay_file(path: &Path) -> Result<Self, GatewayError> {
        Ok(Self::replay(Cassette::open(path, false)?))
    }

    /// Builds a gateway. Record mode creates the cassette file if needed;
    /// replay mode requires it to exist.
    pub fn new(
        mode: GatewayMode,
        config: GatewayConfig,
        cassette_path: Option<&Path>,
        transport: Option<Arc<dyn HttpTransport>>,
    ) -> Result<Self, GatewayError> {
        let cassette = match (mode, cassette_path) {
            (GatewayMode::Replay, Some(p)) => Cassette::open(p, false)?,
            (GatewayMode::Record, Some(p)) => Cassette::open(p, true)?,
            (GatewayMode::Live, Some(p)) => Cassette::open(p, true)?,
            (GatewayMode::Replay, None) => Cassette::new(),
            (_, None) => Cassette::new(),
        };
        let transport = match (mode, transport) {
            (GatewayMode::Replay, t) => t,
            (_, Some(t)) => Some(t),
            (_, None) => Some(Arc::new(
                ReqwestTransport::new(config.timeout).map_err(GatewayError::Transport)?,
            ) as Arc<dyn HttpTransport>),
        };
        Ok(Self {
            mode,
            config,
            cassette: Mutex::new(cassette),
            transport,
            network_calls: AtomicUsize::new(0),
        })
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::SeqCst)
    }

    pub fn cassette_snapshot(&self) -> Cassette {
        self.cassette.lock().unwrap().clone()
    }

    /// Replay answers from the cassette only. Record answers from the
    /// cassette when it can and otherwise calls the endpoint and appends.
    /// Live always calls the endpoint.
    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        req.validate()?;
        match self.mode {
            GatewayMode::Replay => self.lookup_cassette(req),
            GatewayMode::Record => {
                if let Ok(hit) = self.lookup_cassette(req) {
                    return Ok(hit);
                }
                let resp = self.call_remote(req)?;
                self.cassette.lock().unwrap().append(req.clone(), resp.clone())?;
                Ok(resp)
            }
            GatewayMode::Live => self.call_remote(req),
        }
    }

    fn lookup_cassette(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let cassette = self.cassette.lock().unwrap();
        let mut resp = cassette
            .lookup(req)
            .cloned()
            .ok_or_else(|| GatewayError::ReplayMiss { fingerprint: req.fingerprint() })?;
        resp.truncated = resp.texts.len() < req.n_samples as usize;
        Ok(resp)
    }

    fn call_remote(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let key = self.config.api_key.as_deref().ok_or(GatewayError::AuthMissing)?;
        let base = self.config.api_base.as_deref().ok_or(GatewayError::EndpointMissing)?;
        let transport = self
            .transport
            .as_ref()
            .ok_or_else(|| GatewayError::Transport("no transport configured".into()))?;
        let url = format!("{}/chat/completions", base.trim_end_matches('/'));
        let body = wire_body(&self.config.model, req);

        let attempts = self.config.retry_budget + 1;
        let mut last_err = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.config.backoff(attempt - 1));
            }
            self.network_calls.fetch_add(1, Ordering::SeqCst);
            match transport.post_json(&url, key, &body) {
                Ok(reply) if reply.is_success() => return parse_wire_response(&reply.body, req.n_samples),
                Ok(reply) if reply.is_transient() => {
                    last_err = Some(if reply.status == 429 {
                        GatewayError::RateLimited { attempts: attempt + 1 }
                    } else {
                        GatewayError::Http { status: reply.status, attempts: attempt + 1 }
                    });
                }
                Ok(reply) => return Err(GatewayError::Http { status: reply.status, attempts: attempt + 1 }),
                Err(e) => last_err = Some(GatewayError::Transport(e)),
            }
        }
        Err(last_err.expect("at least one attempt"))
    }

    /// Maps `f` over `items` with at most `max_in_flight` concurrent calls,
    /// returning results in input order.
    pub fn par_map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        use rayon::prelude::*;
        let threads = self.config.max_in_flight.max(1);
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            Err(_) => items.iter().map(f).collect(),
        }
    }
}

fn wire_body(model: &str, req: &ChatRequest) -> serde_json::Value {
    let mut messages = Vec::new();
    if let Some(system) = &req.system_prompt {
        messages.push(serde_json::json!({"role": "system", "content": system}));
    }
    messages.push(serde_json::json!({"role": "user", "content": req.user_prompt}));
    serde_json::json!({
        "model": model,
        "messages": messages,
        "n": req.n_samples,
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    })
}

fn parse_wire_response(body: &str, expected: u32) -> Result<ChatResponse, GatewayError> {
    let malformed = |m: &str| GatewayError::MalformedRemoteResponse(m.to_string());
    let value: serde_json::Value = serde_json::from_str(body).map_err(|e| malformed(&e.to_string()))?;
    let choices = value
        .get("choices")
        .and_then(|c| c.as_array())
        .ok_or_else(|| malformed("missing `choices`"))?;
    let mut indexed: Vec<(u64, String)> = Vec::with_capacity(choices.len());
    for (pos, choice) in choices.iter().enumerate() {
        let text = choice
            .pointer("/message/content")
            .and_then(|c| c.as_str())
            .ok_or_else(|| malformed("choice without message content"))?;
        let index = choice.get("index").and_then(|i| i.as_u64()).unwrap_or(pos as u64);
        indexed.push((index, text.to_string()));
    }
    indexed.sort_by_key(|(i, _)| *i);
    if indexed.len() != expected as usize {
        return Err(malformed(&format!("expected {expected} choices, got {}", indexed.len())));
    }
    let usage = value.get("usage");
    let count = |k: &str| usage.and_then(|u| u.get(k)).and_then(|v| v.as_u64()).unwrap_or(0);
    Ok(ChatResponse {
        texts: indexed.into_iter().map(|(_, t)| t).collect(),
        model_name: value.get("model").and_then(|m| m.as_str()).unwrap_or_default().to_string(),
        token_usage: TokenUsage {
            prompt_tokens: count("prompt_tokens"),
            completion_tokens: count("completion_tokens"),
        },
        truncated: false,
    })
}
