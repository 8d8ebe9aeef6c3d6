//! Chat-completion client with retries, a response cache and bounded batches.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{CacheEntry, ResponseCache};
use crate::sha256_hex;

pub const ENDPOINT_ENV: &str = "ENDPOINT_URL";
pub const API_KEY_ENV: &str = "API_KEY";

/// Decoding and transport settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// Falls back to the `ENDPOINT_URL` environment variable when unset.
    pub endpoint_url: Option<String>,
    pub model_id: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_output_tokens: u32,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    /// First retry delay; doubles on each further retry.
    pub backoff_ms: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            endpoint_url: None,
            model_id: String::new(),
            temperature: 0.0,
            top_p: 0.9,
            max_output_tokens: 1024,
            timeout_secs: 120.0,
            max_retries: 3,
            max_in_flight: 4,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("temperature must be >= 0, got {0}")]
    Temperature(f64),
    #[error("top_p must be in (0, 1], got {0}")]
    TopP(f64),
    #[error("max_in_flight must be at least 1")]
    MaxInFlight,
    #[error("timeout_secs must be positive, got {0}")]
    Timeout(f64),
    #[error("model_id is empty")]
    NoModel,
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ConfigError::Temperature(self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ConfigError::TopP(self.top_p));
        }
        if self.max_in_flight == 0 {
            return Err(ConfigError::MaxInFlight);
        }
        if !self.timeout_secs.is_finite() || self.timeout_secs <= 0.0 {
            return Err(ConfigError::Timeout(self.timeout_secs));
        }
        if self.model_id.trim().is_empty() {
            return Err(ConfigError::NoModel);
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    /// Endpoint from the config, else from the environment.
    pub fn resolved_endpoint(&self) -> Option<String> {
        self.endpoint_url
            .clone()
            .or_else(|| std::env::var(ENDPOINT_ENV).ok())
            .filter(|s| !s.trim().is_empty())
    }
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct RequestBody<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
}

/// The exact JSON sent for `prompt`: a single user turn, no system message.
pub fn request_body(prompt: &str, cfg: &InferenceConfig) -> String {
    serde_json::to_string(&RequestBody {
        model: &cfg.model_id,
        messages: [Message {
            role: "user",
            content: prompt,
        }],
        temperature: cfg.temperature,
        top_p: cfg.top_p,
        max_tokens: cfg.max_output_tokens,
    })
    .expect("request body serializes")
}

pub fn prompt_checksum(prompt: &str) -> String {
    sha256_hex(prompt.as_bytes())
}

/// Why a request produced no text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Failure {
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {message}")]
    Transport { message: String },
    #[error("endpoint returned status {status}")]
    Status { status: u16, body: String },
    #[error("completion was empty")]
    EmptyCompletion,
    #[error("unreadable reply: {message}")]
    BadReply { message: String },
    #[error("no cached response and network use is disabled")]
    CacheMiss,
}

impl Failure {
    fn retryable(&self) -> bool {
        match self {
            Failure::Timeout | Failure::Transport { .. } => true,
            Failure::Status { status, .. } => *status >= 500 || *status == 429,
            _ => false,
        }
    }
}

/// Outcome of one prompt. Exactly one of `text` and `error` is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub post_id: String,
    pub prompt_checksum: String,
    pub text: Option<String>,
    pub error: Option<Failure>,
    pub latency_ms: u64,
    pub attempt_count: u32,
    /// Served from the response cache; latency and attempts are the recorded ones.
    #[serde(default)]
    pub cached: bool,
}

/// An HTTP reply as seen by the client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Timeout,
    Other(String),
}

/// Sends one JSON request body and returns the reply.
pub trait Transport: Send + Sync {
    fn post_json(&self, body: &str, timeout: Duration) -> Result<Reply, TransportError>;
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn post_json(&self, body: &str, timeout: Duration) -> Result<Reply, TransportError> {
        (**self).post_json(body, timeout)
    }
}

/// Blocking HTTP transport. The bearer token is sent when present.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, api_key: Option<String>) -> Self {
        HttpTransport {
            client: reqwest::blocking::Client::new(),
            url: url.into(),
            api_key,
        }
    }

    /// Endpoint and key from `ENDPOINT_URL` / `API_KEY` unless `cfg` sets the endpoint.
    pub fn from_config(cfg: &InferenceConfig) -> Option<Self> {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        cfg.resolved_endpoint().map(|url| HttpTransport::new(url, key))
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, body: &str, timeout: Duration) -> Result<Reply, TransportError> {
        let mut req = self
            .client
            .post(&self.url)
            .timeout(timeout)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_string());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Other(e.to_string())
            }
        };
        let resp = req.send().map_err(classify)?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(classify)?;
        Ok(Reply { status, body })
    }
}

/// Transport for runs that must not touch the network.
pub struct NoTransport;

impl Transport for NoTransport {
    fn post_json(&self, _: &str, _: Duration) -> Result<Reply, TransportError> {
        Err(TransportError::Other("no endpoint configured".into()))
    }
}

const ERROR_BODY_LIMIT: usize = 512;

fn completion_text(reply: Reply) -> Result<String, Failure> {
    if !(200..300).contains(&reply.status) {
        let mut body = reply.body;
        if body.len() > ERROR_BODY_LIMIT {
            let mut cut = ERROR_BODY_LIMIT;
            while !body.is_char_boundary(cut) {
                cut -= 1;
            }
            body.truncate(cut);
        }
        return Err(Failure::Status {
            status: reply.status,
            body,
        });
    }
    let value: serde_json::Value =
        serde_json::from_str(&reply.body).map_err(|e| Failure::BadReply { message: e.to_string() })?;
    let content = value
        .pointer("/choices/0/message/content")
        .or_else(|| value.pointer("/choices/0/text"))
        .ok_or_else(|| Failure::BadReply {
            message: "no choices[0].message.content".into(),
        })?;
    match content {
        serde_json::Value::String(s) if !s.trim().is_empty() => Ok(s.clone()),
        serde_json::Value::String(_) | serde_json::Value::Null => Err(Failure::EmptyCompletion),
        _ => Err(Failure::BadReply {
            message: "content is not a string".into(),
        }),
    }
}

/// One prompt to send, tagged with its post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub post_id: String,
    pub prompt: String,
}

pub struct InferenceClient {
    cfg: InferenceConfig,
    transport: Box<dyn Transport>,
    cache: Option<ResponseCache>,
    offline: bool,
}

impl InferenceClient {
    pub fn new(cfg: InferenceConfig, transport: Box<dyn Transport>) -> Self {
        InferenceClient {
            cfg,
            transport,
            cache: None,
            offline: false,
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    /// Serve only from the cache; misses become [`Failure::CacheMiss`].
    pub fn offline(mut self, offline: bool) -> Self {
        self.offline = offline;
        self
    }

    pub fn config(&self) -> &InferenceConfig {
        &self.cfg
    }

    pub fn complete(&self, post_id: &str, prompt: &str) -> RawResponse {
        let checksum = prompt_checksum(prompt);
        let key = ResponseCache::key(
            &self.cfg.model_id,
            &checksum,
            self.cfg.temperature,
            self.cfg.top_p,
            self.cfg.max_output_tokens,
        );
        let mut out = RawResponse {
            post_id: post_id.to_string(),
            prompt_checksum: checksum,
            text: None,
            error: None,
            latency_ms: 0,
            attempt_count: 0,
            cached: false,
        };
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            out.text = Some(hit.text);
            out.latency_ms = hit.latency_ms;
            out.attempt_count = hit.attempt_count;
            out.cached = true;
            return out;
        }
        if self.offline {
            out.error = Some(Failure::CacheMiss);
            return out;
        }

        let body = request_body(prompt, &self.cfg);
        let start = Instant::now();
        let result = loop {
            out.attempt_count += 1;
            let result = match self.transport.post_json(&body, self.cfg.timeout()) {
                Ok(reply) => completion_text(reply),
                Err(TransportError::Timeout) => Err(Failure::Timeout),
                Err(TransportError::Other(message)) => Err(Failure::Transport { message }),
            };
            match result {
                Err(f) if f.retryable() && out.attempt_count <= self.cfg.max_retries => {
                    log::debug!("post {post_id}: attempt {} failed: {f}", out.attempt_count);
                    let factor = 1u64 << (out.attempt_count - 1).min(16);
                    thread::sleep(Duration::from_millis(self.cfg.backoff_ms.saturating_mul(factor)));
                }
                other => break other,
            }
        };
        out.latency_ms = start.elapsed().as_millis() as u64;
        match result {
            Ok(text) => {
                if let Some(cache) = &self.cache {
                    let entry = CacheEntry {
                        request: serde_json::from_str(&body).expect("request body is JSON"),
                        text: text.clone(),
                        latency_ms: out.latency_ms,
                        attempt_count: out.attempt_count,
                    };
                    if let Err(e) = cache.put(&key, &entry) {
                        log::warn!("could not write cache entry {key}: {e}");
                    }
                }
                out.text = Some(text);
            }
            Err(f) => {
                log::warn!("post {post_id}: {f} after {} attempt(s)", out.attempt_count);
                out.error = Some(f);
            }
        }
        out
    }

    /// Completes every request with at most `max_in_flight` outstanding.
    /// Responses come back in input order.
    pub fn run_batch(&self, requests: &[PromptRequest]) -> Vec<RawResponse> {
        let workers = self.cfg.max_in_flight.max(1).min(requests.len());
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<RawResponse>>> = Mutex::new(vec![None; requests.len()]);
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(req) = requests.get(i) else { break };
                    let resp = self.complete(&req.post_id, &req.prompt);
                    slots.lock().expect("batch slots")[i] = Some(resp);
                });
            }
        });
        slots
            .into_inner()
            .expect("batch slots")
            .into_iter()
            .map(|r| r.expect("every request answered"))
            .collect()
    }
}
