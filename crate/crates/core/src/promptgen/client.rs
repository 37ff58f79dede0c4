use std::sync::Arc;
use std::time::Duration;

use futures::stream::{self, StreamExt, TryStreamExt};
use rand::Rng;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;
use tokio::time::Instant;
use tracing::{debug, warn};

use super::{parse_generation, PromptSpec};

pub const API_KEY_ENV: &str = "BURNOUT_LLM_API_KEY";

/// Sentences generated for one prompt. Failed prompts are kept as empty
/// batches with `error` set so a run never loses track of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationBatch {
    pub prompt_id: String,
    pub burnout_sentences: Vec<String>,
    pub neutral_sentences: Vec<String>,
    pub raw_response: String,
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub unparseable: bool,
}

impl GenerationBatch {
    fn failed(spec: &PromptSpec, model: &str, raw: String, error: String) -> Self {
        GenerationBatch {
            prompt_id: spec.id.clone(),
            burnout_sentences: Vec::new(),
            neutral_sentences: Vec::new(),
            raw_response: raw,
            model_name: model.to_string(),
            error: Some(error),
            unparseable: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GenerateError {
    #[error("endpoint rejected credentials (HTTP {status}) on prompt {prompt_id}; set {API_KEY_ENV}")]
    Auth { status: u16, prompt_id: String },
    #[error("cannot build HTTP client: {0}")]
    Client(#[from] reqwest::Error),
}

/// Where and how to reach the generation model.
#[derive(Debug, Clone)]
pub struct LlmEndpoint {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_attempts: u32,
    pub base_backoff: Duration,
    pub concurrency: usize,
    /// `None` disables rate limiting.
    pub requests_per_minute: Option<u32>,
}

impl LlmEndpoint {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        LlmEndpoint {
            url: url.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            max_attempts: 3,
            base_backoff: Duration::from_millis(500),
            concurrency: 4,
            requests_per_minute: None,
        }
    }

    /// Like [`LlmEndpoint::new`], with the key read from the environment.
    pub fn from_env(url: impl Into<String>, model: impl Into<String>) -> Self {
        let mut e = Self::new(url, model);
        e.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        e
    }
}

#[derive(Serialize)]
struct Request<'a> {
    model: &'a str,
    prompt: &'a str,
}

/// Pulls the completion text out of either `{"text": ..}` or a
/// chat-completions style `{"choices": [..]}` body.
fn completion_text(body: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(body).ok()?;
    if let Some(t) = v.get("text").and_then(|t| t.as_str()) {
        return Some(t.to_string());
    }
    let choice = v.get("choices")?.get(0)?;
    choice
        .pointer("/message/content")
        .or_else(|| choice.get("text"))
        .and_then(|t| t.as_str())
        .map(String::from)
}

enum Attempt {
    Done(String),
    Transient(String),
    Permanent(String),
    Auth(u16),
}

/// Spaces request start times at least `interval` apart.
struct Pacer {
    interval: Duration,
    next: Mutex<Instant>,
}

impl Pacer {
    async fn wait(&self) {
        let slot = {
            let mut next = self.next.lock().await;
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot
        };
        tokio::time::sleep_until(slot).await;
    }
}

async fn attempt(client: &reqwest::Client, ep: &LlmEndpoint, prompt: &str) -> Attempt {
    let mut req = client.post(&ep.url).json(&Request {
        model: &ep.model,
        prompt,
    });
    if let Some(key) = &ep.api_key {
        req = req.bearer_auth(key);
    }
    let resp = match req.send().await {
        Ok(r) => r,
        Err(e) => return Attempt::Transient(e.to_string()),
    };
    let status = resp.status();
    if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
        return Attempt::Auth(status.as_u16());
    }
    let body = match resp.text().await {
        Ok(b) => b,
        Err(e) => return Attempt::Transient(e.to_string()),
    };
    if status.is_success() {
        Attempt::Done(body)
    } else if status.is_server_error()
        || status == StatusCode::TOO_MANY_REQUESTS
        || status == StatusCode::REQUEST_TIMEOUT
    {
        Attempt::Transient(format!("HTTP {status}"))
    } else {
        Attempt::Permanent(format!("HTTP {status}: {body}"))
    }
}

async fn generate_one(
    client: &reqwest::Client,
    ep: &LlmEndpoint,
    pacer: Option<&Pacer>,
    spec: &PromptSpec,
) -> Result<GenerationBatch, GenerateError> {
    let mut last_error = String::new();
    for n in 1..=ep.max_attempts.max(1) {
        if let Some(p) = pacer {
            p.wait().await;
        }
        match attempt(client, ep, &spec.rendered_text).await {
            Attempt::Done(body) => {
                let raw = completion_text(&body).unwrap_or(body);
                return Ok(match parse_generation(&raw, spec.sentences_per_label) {
                    Ok((burnout, neutral)) => GenerationBatch {
                        prompt_id: spec.id.clone(),
                        burnout_sentences: burnout,
                        neutral_sentences: neutral,
                        raw_response: raw,
                        model_name: ep.model.clone(),
                        error: None,
                        unparseable: false,
                    },
                    Err(e) => {
                        warn!(prompt = %spec.id, "unparseable response");
                        let mut b = GenerationBatch::failed(spec, &ep.model, raw, e.to_string());
                        b.unparseable = true;
                        b
                    }
                });
            }
            Attempt::Auth(status) => {
                return Err(GenerateError::Auth {
                    status,
                    prompt_id: spec.id.clone(),
                })
            }
            Attempt::Permanent(e) => {
                warn!(prompt = %spec.id, error = %e, "permanent failure");
                return Ok(GenerationBatch::failed(spec, &ep.model, String::new(), e));
            }
            Attempt::Transient(e) => {
                debug!(prompt = %spec.id, attempt = n, error = %e, "transient failure");
                last_error = e;
                if n < ep.max_attempts {
                    let jitter = rand::thread_rng().gen_range(0.5..1.5);
                    let delay = ep.base_backoff.mul_f64(2f64.powi(n as i32 - 1) * jitter);
                    tokio::time::sleep(delay).await;
                }
            }
        }
    }
    warn!(prompt = %spec.id, error = %last_error, "giving up after retries");
    Ok(GenerationBatch::failed(
        spec,
        &ep.model,
        String::new(),
        format!("failed after {} attempts: {last_error}", ep.max_attempts.max(1)),
    ))
}

/// One batch per prompt, in prompt order, with at most
/// `endpoint.concurrency` requests in flight. Transient failures (network,
/// 5xx, 429) are retried with jittered exponential backoff. A 401 or 403
/// aborts the whole run.
pub async fn generate(specs: &[PromptSpec], endpoint: &LlmEndpoint) -> Result<Vec<GenerationBatch>, GenerateError> {
    let client = reqwest::Client::builder().timeout(endpoint.timeout).build()?;
    let pacer = endpoint.requests_per_minute.filter(|r| *r > 0).map(|rpm| {
        Arc::new(Pacer {
            interval: Duration::from_secs_f64(60.0 / rpm as f64),
            next: Mutex::new(Instant::now()),
        })
    });
    stream::iter(specs)
        .map(|spec| {
            let client = &client;
            let pacer = pacer.clone();
            async move { generate_one(client, endpoint, pacer.as_deref(), spec).await }
        })
        .buffered(endpoint.concurrency.max(1))
        .try_collect()
        .await
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use axum::extract::State;
    use axum::http::StatusCode as AxStatus;
    use axum::routing::post;
    use axum::{Json, Router};

    use super::*;
    use crate::promptgen::{enumerate_prompts, FactorConfig, PromptTemplate};

    fn response(burnout: usize, neutral: usize) -> String {
        let mut s = String::from("BURNOUT:\n");
        for i in 1..=burnout {
            s.push_str(&format!("{i}. I am exhausted by task {i}.\n"));
        }
        s.push_str("NEUTRAL:\n");
        for i in 1..=neutral {
            s.push_str(&format!("{i}. Task {i} went fine.\n"));
        }
        s
    }

    #[derive(Clone)]
    struct Script {
        hits: Arc<AtomicUsize>,
        statuses: Arc<Vec<u16>>,
        body: Arc<String>,
    }

    async fn handler(State(s): State<Script>, Json(req): Json<serde_json::Value>) -> (AxStatus, String) {
        assert!(req["model"].is_string() && req["prompt"].is_string());
        let n = s.hits.fetch_add(1, Ordering::SeqCst);
        let status = s.statuses.get(n).copied().unwrap_or(200);
        let body = if status == 200 {
            serde_json::json!({ "text": *s.body }).to_string()
        } else {
            "oops".to_string()
        };
        (AxStatus::from_u16(status).unwrap(), body)
    }

    async fn serve(statuses: Vec<u16>, body: String) -> (String, Arc<AtomicUsize>) {
        let hits = Arc::new(AtomicUsize::new(0));
        let app = Router::new().route("/generate", post(handler)).with_state(Script {
            hits: hits.clone(),
            statuses: Arc::new(statuses),
            body: Arc::new(body),
        });
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
        (format!("http://{addr}/generate"), hits)
    }

    fn specs(n: usize) -> Vec<PromptSpec> {
        let mut all = enumerate_prompts(&FactorConfig::default(), &PromptTemplate::default_v1(), 10).unwrap();
        all.truncate(n);
        all
    }

    fn endpoint(url: String) -> LlmEndpoint {
        let mut ep = LlmEndpoint::new(url, "stub-model");
        ep.base_backoff = Duration::from_millis(5);
        ep
    }

    #[tokio::test]
    async fn full_response_round_trip() {
        let (url, _) = serve(vec![], response(10, 10)).await;
        let out = generate(&specs(3), &endpoint(url)).await.unwrap();
        assert_eq!(out.len(), 3);
        for (b, s) in out.iter().zip(specs(3)) {
            assert_eq!(b.prompt_id, s.id);
            assert_eq!((b.burnout_sentences.len(), b.neutral_sentences.len()), (10, 10));
            assert_eq!(b.model_name, "stub-model");
            assert!(b.error.is_none());
        }
    }

    #[tokio::test]
    async fn short_section_kept() {
        let (url, _) = serve(vec![], response(7, 10)).await;
        let out = generate(&specs(1), &endpoint(url)).await.unwrap();
        assert_eq!(
            (out[0].burnout_sentences.len(), out[0].neutral_sentences.len()),
            (7, 10)
        );
        assert!(out[0].error.is_none());
    }

    #[tokio::test]
    async fn retries_transient_errors() {
        let (url, hits) = serve(vec![500, 500, 200], response(10, 10)).await;
        let out = generate(&specs(1), &endpoint(url)).await.unwrap();
        assert_eq!(hits.load(Ordering::SeqCst), 3);
        assert!(out[0].error.is_none());
        assert_eq!(out[0].burnout_sentences.len(), 10);
    }

    #[tokio::test]
    async fn exhausted_retries_give_empty_batch() {
        let (url, hits) = serve(vec![503, 503, 503, 200], response(10, 10)).await;
        let out = generate(&specs(1), &endpoint(url)).await.unwrap();
        assert_eq!(hits.load(Ordering::SeqCst), 3);
        assert!(out[0].burnout_sentences.is_empty());
        assert!(out[0].error.as_deref().unwrap().contains("3 attempts"));
    }

    #[tokio::test]
    async fn auth_failure_aborts() {
        let (url, _) = serve(vec![401], response(10, 10)).await;
        let mut ep = endpoint(url);
        ep.concurrency = 1;
        let err = generate(&specs(2), &ep).await.unwrap_err();
        assert!(matches!(err, GenerateError::Auth { status: 401, .. }));
    }

    #[tokio::test]
    async fn malformed_response_flagged() {
        let (url, _) = serve(vec![], "I'd rather not.".into()).await;
        let out = generate(&specs(1), &endpoint(url)).await.unwrap();
        assert!(out[0].unparseable);
        assert_eq!(out[0].raw_response, "I'd rather not.");
    }

    #[tokio::test]
    async fn order_preserved_under_concurrency() {
        let (url, _) = serve(vec![500, 200, 500], response(2, 2)).await;
        let mut ep = endpoint(url);
        ep.concurrency = 8;
        let s = specs(12);
        let out = generate(&s, &ep).await.unwrap();
        let ids: Vec<_> = out.iter().map(|b| b.prompt_id.clone()).collect();
        let expected: Vec<_> = s.iter().map(|p| p.id.clone()).collect();
        assert_eq!(ids, expected);
    }

    #[test]
    fn chat_style_bodies() {
        let chat = r#"{"choices":[{"message":{"role":"assistant","content":"BURNOUT:\n1. x"}}]}"#;
        assert_eq!(completion_text(chat).as_deref(), Some("BURNOUT:\n1. x"));
        assert_eq!(completion_text(r#"{"choices":[{"text":"y"}]}"#).as_deref(), Some("y"));
        assert_eq!(completion_text("plain"), None);
    }
}
