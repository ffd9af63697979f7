mod common;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use ci_forge::gateway::{GatewayConfig, GatewayMode, HttpReply, HttpTransport, ModelGateway};
use ci_forge::statute::{classify_norms, ClassifyOptions};
use common::*;

/// A chat endpoint that answers from the fixture cassette by prompt text.
struct FakeEndpoint {
    answers: BTreeMap<(String, u32), Vec<String>>,
    posts: Mutex<usize>,
}

impl FakeEndpoint {
    fn new() -> Arc<Self> {
        let answers = recorded_cassette()
            .entries()
            .map(|e| ((e.request.user_prompt.clone(), e.request.n_samples), e.response.texts.clone()))
            .collect();
        Arc::new(FakeEndpoint { answers, posts: Mutex::new(0) })
    }
}

impl HttpTransport for FakeEndpoint {
    fn post_json(&self, url: &str, bearer: &str, body: &serde_json::Value) -> Result<HttpReply, String> {
        assert!(url.ends_with("/chat/completions"));
        assert_eq!(bearer, "test-key");
        *self.posts.lock().unwrap() += 1;
        let prompt = body["messages"][0]["content"].as_str().unwrap().to_string();
        let n = body["n"].as_u64().unwrap() as u32;
        let Some(texts) = self.answers.get(&(prompt, n)) else {
            return Ok(HttpReply { status: 400, body: "unknown prompt".into() });
        };
        let choices: Vec<_> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| serde_json::json!({"index": i, "message": {"role": "assistant", "content": t}}))
            .collect();
        Ok(HttpReply::ok(serde_json::json!({"model": "fake", "choices": choices}).to_string()))
    }

    fn get(&self, _url: &str, _bearer: Option<&str>) -> Result<HttpReply, String> {
        Err("no GET endpoint".into())
    }
}

fn config() -> GatewayConfig {
    GatewayConfig {
        api_base: Some("http://fake.invalid/v1".into()),
        api_key: Some("test-key".into()),
        backoff_base: Duration::ZERO,
        ..GatewayConfig::default()
    }
}

#[test]
fn record_then_replay_offline() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("recorded.jsonl");
    let endpoint = FakeEndpoint::new();
    let norms = mini_norms();
    let opts = ClassifyOptions::default();

    let recorder = ModelGateway::new(GatewayMode::Record, config(), Some(&path), Some(endpoint.clone())).unwrap();
    let recorded = classify_norms(&norms, &recorder, &opts).unwrap();
    // one call per norm plus the resample for the unparseable first answer
    assert_eq!(recorder.network_calls(), norms.len() + 1);
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), norms.len() + 1);

    // a second record pass is served from the cassette
    let again = ModelGateway::new(GatewayMode::Record, config(), Some(&path), Some(endpoint.clone())).unwrap();
    assert_eq!(classify_norms(&norms, &again, &opts).unwrap(), recorded);
    assert_eq!(again.network_calls(), 0);

    let replay = ModelGateway::replay_file(&path).unwrap();
    assert_eq!(classify_norms(&norms, &replay, &opts).unwrap(), recorded);
    assert_eq!(replay.network_calls(), 0);
    assert_eq!(*endpoint.posts.lock().unwrap(), norms.len() + 1);

    let retried = recorded.iter().find(|n| n.leaf_id.to_string() == "164.514(e)").unwrap();
    assert!(!retried.classification_failed);
    assert!(retried.types.iter().any(|t| t.as_str() == "Permit"));
}

#[test]
fn replay_miss_is_an_error_not_a_guess() {
    let mut norms = mini_norms();
    norms[0].full_text.push_str(" (amended)");
    let gw = ModelGateway::replay(recorded_cassette());
    let err = classify_norms(&norms[..1], &gw, &ClassifyOptions::default()).unwrap_err();
    assert!(matches!(err, ci_forge::GatewayError::ReplayMiss { .. }), "{err}");
}
