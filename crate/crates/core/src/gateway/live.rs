use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::limit::{RateLimiter, Sleeper, ThreadSleeper};
use super::{BackendKind, ChatBackend, ChatExchange, ChatRequest, FailureKind, GatewayError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderPreset {
    /// `chat/completions` at an OpenAI-compatible base URL.
    OpenAi,
    /// The same request shape at Google's OpenAI-compatible endpoint.
    Gemini,
}

impl ProviderPreset {
    pub fn default_base_url(self) -> &'static str {
        match self {
            ProviderPreset::OpenAi => "https://api.openai.com/v1",
            ProviderPreset::Gemini => "https://generativelanguage.googleapis.com/v1beta/openai",
        }
    }

    pub fn key_env(self) -> &'static str {
        match self {
            ProviderPreset::OpenAi => "OPENAI_API_KEY",
            ProviderPreset::Gemini => "GEMINI_API_KEY",
        }
    }

    pub fn base_url_env(self) -> &'static str {
        match self {
            ProviderPreset::OpenAi => "OPENAI_BASE_URL",
            ProviderPreset::Gemini => "GEMINI_BASE_URL",
        }
    }

    /// Picks a preset from the model id.
    pub fn for_model(model_id: &str) -> Self {
        if model_id.starts_with("gemini") {
            ProviderPreset::Gemini
        } else {
            ProviderPreset::OpenAi
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub multiplier: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 4, initial_backoff_ms: 1000, multiplier: 2 }
    }
}

impl RetryPolicy {
    /// Wait before attempt `attempt + 1`, for `attempt >= 1`.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = (self.multiplier as u64).saturating_pow(attempt.saturating_sub(1));
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    pub preset: ProviderPreset,
    pub base_url: String,
    pub api_key: String,
    pub requests_per_minute: usize,
    pub retry: RetryPolicy,
    pub timeout_secs: u64,
}

impl LiveConfig {
    /// Reads the key (and an optional base URL override) from the environment.
    pub fn from_env(preset: ProviderPreset, requests_per_minute: usize) -> Result<Self, GatewayError> {
        let api_key = std::env::var(preset.key_env())
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| GatewayError::failure(FailureKind::Auth, format!("{} is not set", preset.key_env())))?;
        let base_url =
            std::env::var(preset.base_url_env()).unwrap_or_else(|_| preset.default_base_url().to_string());
        Ok(LiveConfig {
            preset,
            base_url,
            api_key,
            requests_per_minute,
            retry: RetryPolicy::default(),
            timeout_secs: 120,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Connection, DNS, TLS or timeout failure.
    Network(String),
}

pub trait HttpTransport: Send + Sync {
    /// POSTs a JSON body with bearer auth, returning status and body text.
    fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<(u16, String), TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::failure(FailureKind::Network, e.to_string()))?;
        Ok(ReqwestTransport { client })
    }
}

impl HttpTransport for ReqwestTransport {
    fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<(u16, String), TransportError> {
        let resp = self
            .client
            .post(url)
            .bearer_auth(bearer)
            .json(body)
            .send()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| TransportError::Network(e.to_string()))?;
        Ok((status, text))
    }
}

pub struct LiveBackend {
    config: LiveConfig,
    transport: Arc<dyn HttpTransport>,
    limiter: Arc<RateLimiter>,
    sleeper: Arc<dyn Sleeper>,
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Result<Self, GatewayError> {
        let transport = Arc::new(ReqwestTransport::new(Duration::from_secs(config.timeout_secs))?);
        let limiter = Arc::new(RateLimiter::system(config.requests_per_minute));
        Ok(LiveBackend::with_parts(config, transport, limiter, Arc::new(ThreadSleeper)))
    }

    pub fn with_parts(
        config: LiveConfig,
        transport: Arc<dyn HttpTransport>,
        limiter: Arc<RateLimiter>,
        sleeper: Arc<dyn Sleeper>,
    ) -> Self {
        LiveBackend { config, transport, limiter, sleeper }
    }

    fn body(&self, request: &ChatRequest) -> Value {
        let mut body = json!({
            "model": request.model_id,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if let (Some(seed), ProviderPreset::OpenAi) = (request.seed, self.config.preset) {
            body["seed"] = json!(seed);
        }
        body
    }

    fn attempt(&self, url: &str, body: &Value) -> Result<String, GatewayError> {
        self.limiter.acquire();
        let (status, text) = self
            .transport
            .post_json(url, &self.config.api_key, body)
            .map_err(|TransportError::Network(m)| GatewayError::failure(FailureKind::Network, m))?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(GatewayError::failure(FailureKind::Auth, format!("http {status}"))),
            429 => return Err(GatewayError::failure(FailureKind::RateLimit, format!("http {status}"))),
            500..=599 => return Err(GatewayError::failure(FailureKind::Network, format!("http {status}"))),
            _ => {
                let snippet: String = text.chars().take(200).collect();
                return Err(GatewayError::failure(FailureKind::Protocol, format!("http {status}: {snippet}")));
            }
        }
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| GatewayError::failure(FailureKind::Protocol, format!("response is not json: {e}")))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| GatewayError::failure(FailureKind::Protocol, "response has no choices[0].message.content"))
    }
}

impl ChatBackend for LiveBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatExchange, GatewayError> {
        request.validate()?;
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = self.body(request);
        let policy = &self.config.retry;
        let mut last_error = None;
        for attempt in 1..=policy.max_attempts.max(1) {
            let started = Instant::now();
            match self.attempt(&url, &body) {
                Ok(text) => {
                    return Ok(ChatExchange {
                        request: request.clone(),
                        response_text: text,
                        latency_ms: started.elapsed().as_millis() as u64,
                        backend: BackendKind::Live,
                        attempt,
                    })
                }
                Err(err) => {
                    tracing::warn!(attempt, tag = %request.request_tag, error = %err, "chat attempt failed");
                    let retryable = matches!(&err, GatewayError::Failure { kind, .. } if kind.is_retryable());
                    if !retryable {
                        return Err(err);
                    }
                    last_error = Some(err);
                    if attempt < policy.max_attempts {
                        self.sleeper.sleep(policy.backoff(attempt));
                    }
                }
            }
        }
        Err(GatewayError::failure(
            FailureKind::Exhausted,
            format!(
                "{} attempts failed; last: {}",
                policy.max_attempts,
                last_error.map(|e| e.to_string()).unwrap_or_default()
            ),
        ))
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Live
    }
}
