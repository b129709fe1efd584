//! Chat-completion backend: wire types, transports, retry and rate
//! limiting.
//!
//! The wire format is the common JSON chat shape (`model`, `messages` of
//! `{role, content}`, `temperature`, `max_tokens`), with the reply read
//! from the first choice's message content. Transports are swappable so
//! tests replay recorded fixtures instead of touching the network.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{PolicyError, TextCompleter};

/// Remote backend settings. The API key is read from the named
/// environment variable, never stored in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub endpoint: String,
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Total attempts per request (>= 1).
    #[serde(default = "default_attempts")]
    pub retry_attempts: u32,
    /// Backoff before each retry, in milliseconds; the last entry repeats.
    #[serde(default = "default_backoff")]
    pub retry_backoff_ms: Vec<u64>,
    /// Maximum request rate in requests per second.
    #[serde(default = "default_rps")]
    pub rate_limit_rps: f64,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
}

fn default_temperature() -> f64 {
    0.7
}
fn default_max_tokens() -> u32 {
    512
}
fn default_attempts() -> u32 {
    3
}
fn default_backoff() -> Vec<u64> {
    vec![500, 1000, 2000]
}
fn default_rps() -> f64 {
    2.0
}
fn default_key_env() -> String {
    "ARBOR_API_KEY".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Deserialize)]
struct ChatResponseBody {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    content: String,
}

#[derive(Debug, Error, Clone)]
pub enum TransportError {
    /// Worth retrying: timeouts, connection errors, 429/5xx.
    #[error("transient transport failure: {0}")]
    Transient(String),
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("response not in the expected shape: {0}")]
    Malformed(String),
}

/// A way to deliver one chat request and get the completion text back.
pub trait ChatTransport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

/// HTTPS transport over the standard chat-completion endpoint.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: String,
}

impl HttpTransport {
    /// Fails with [`PolicyError::AuthError`] when the key variable is
    /// absent or empty.
    pub fn new(cfg: &BackendConfig) -> Result<Self, PolicyError> {
        let api_key = std::env::var(&cfg.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| {
                PolicyError::AuthError(format!("environment variable {} not set", cfg.api_key_env))
            })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| PolicyError::BackendUnavailable(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: cfg.endpoint.clone(),
            api_key,
        })
    }
}

impl ChatTransport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(request)
            .send()
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(TransportError::Auth(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(TransportError::Transient(format!("status {status}")));
        }
        let body: ChatResponseBody = resp
            .json()
            .map_err(|e| TransportError::Malformed(e.to_string()))?;
        body.choices
            .first()
            .map(|c| c.message.content.clone())
            .ok_or_else(|| TransportError::Malformed("empty choices".into()))
    }
}

/// Replays canned responses in order; used in tests and offline runs.
pub struct FixtureTransport {
    responses: Mutex<std::collections::VecDeque<Result<String, TransportError>>>,
    pub calls: Mutex<u32>,
}

impl FixtureTransport {
    pub fn new(responses: Vec<Result<String, TransportError>>) -> Self {
        Self {
            responses: Mutex::new(responses.into()),
            calls: Mutex::new(0),
        }
    }
}

impl ChatTransport for FixtureTransport {
    fn send(&self, _request: &ChatRequest) -> Result<String, TransportError> {
        *self.calls.lock().unwrap() += 1;
        self.responses
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(TransportError::Transient("fixture exhausted".into())))
    }
}

/// Spaces requests so the configured requests-per-second is respected.
struct RateLimiter {
    min_interval: Duration,
    last: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn new(rps: f64) -> Self {
        let min_interval = if rps > 0.0 {
            Duration::from_secs_f64(1.0 / rps)
        } else {
            Duration::ZERO
        };
        Self {
            min_interval,
            last: Mutex::new(None),
        }
    }

    fn acquire(&self) {
        let mut last = self.last.lock().unwrap();
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.min_interval {
                std::thread::sleep(self.min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}

/// Sends one request with retries and backoff on transient failures.
pub fn chat_complete(
    request: &ChatRequest,
    cfg: &BackendConfig,
    transport: &dyn ChatTransport,
) -> Result<String, PolicyError> {
    let attempts = cfg.retry_attempts.max(1);
    let mut last_err = None;
    for attempt in 0..attempts {
        if attempt > 0 {
            let idx = (attempt as usize - 1).min(cfg.retry_backoff_ms.len().saturating_sub(1));
            if let Some(&ms) = cfg.retry_backoff_ms.get(idx) {
                std::thread::sleep(Duration::from_millis(ms));
            }
        }
        match transport.send(request) {
            Ok(text) => return Ok(text),
            Err(TransportError::Auth(m)) => return Err(PolicyError::AuthError(m)),
            Err(TransportError::Malformed(m)) => return Err(PolicyError::MalformedResponse(m)),
            Err(e @ TransportError::Transient(_)) => last_err = Some(e),
        }
    }
    Err(PolicyError::BackendUnavailable(format!(
        "{} attempts exhausted, last error: {}",
        attempts,
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

/// A configured backend plus transport, usable as a [`TextCompleter`].
pub struct ChatClient {
    cfg: BackendConfig,
    transport: Box<dyn ChatTransport>,
    limiter: RateLimiter,
}

impl ChatClient {
    pub fn new(cfg: BackendConfig, transport: Box<dyn ChatTransport>) -> Self {
        let limiter = RateLimiter::new(cfg.rate_limit_rps);
        Self {
            cfg,
            transport,
            limiter,
        }
    }

    pub fn from_env(cfg: BackendConfig) -> Result<Self, PolicyError> {
        let transport = HttpTransport::new(&cfg)?;
        Ok(Self::new(cfg, Box::new(transport)))
    }
}

impl TextCompleter for ChatClient {
    fn complete(&self, prompt: &str) -> Result<String, PolicyError> {
        self.limiter.acquire();
        let request = ChatRequest {
            model: self.cfg.model_name.clone(),
            messages: vec![ChatMessage {
                role: "user".to_string(),
                content: prompt.to_string(),
            }],
            temperature: self.cfg.temperature,
            max_tokens: self.cfg.max_tokens,
        };
        chat_complete(&request, &self.cfg, self.transport.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> BackendConfig {
        BackendConfig {
            endpoint: "http://localhost/unused".into(),
            model_name: "test".into(),
            temperature: 0.7,
            max_tokens: 64,
            retry_attempts: 3,
            retry_backoff_ms: vec![0],
            rate_limit_rps: 0.0,
            api_key_env: "ARBOR_API_KEY".into(),
        }
    }

    fn request() -> ChatRequest {
        ChatRequest {
            model: "test".into(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: "hi".into(),
            }],
            temperature: 0.7,
            max_tokens: 64,
        }
    }

    #[test]
    fn replays_fixture_response() {
        let t = FixtureTransport::new(vec![Ok("hello".into())]);
        assert_eq!(chat_complete(&request(), &cfg(), &t).unwrap(), "hello");
    }

    #[test]
    fn retries_until_success() {
        let t = FixtureTransport::new(vec![
            Err(TransportError::Transient("a".into())),
            Err(TransportError::Transient("b".into())),
            Ok("third".into()),
        ]);
        assert_eq!(chat_complete(&request(), &cfg(), &t).unwrap(), "third");
        assert_eq!(*t.calls.lock().unwrap(), 3);
    }

    #[test]
    fn exhausted_attempts_carry_last_error() {
        let t = FixtureTransport::new(vec![
            Err(TransportError::Transient("x".into())),
            Err(TransportError::Transient("y".into())),
            Err(TransportError::Transient("z".into())),
        ]);
        match chat_complete(&request(), &cfg(), &t) {
            Err(PolicyError::BackendUnavailable(m)) => assert!(m.contains('z')),
            other => panic!("expected BackendUnavailable, got {other:?}"),
        }
    }

    #[test]
    fn auth_errors_do_not_retry() {
        let t = FixtureTransport::new(vec![Err(TransportError::Auth("denied".into()))]);
        assert!(matches!(
            chat_complete(&request(), &cfg(), &t),
            Err(PolicyError::AuthError(_))
        ));
        assert_eq!(*t.calls.lock().unwrap(), 1);
    }
}
