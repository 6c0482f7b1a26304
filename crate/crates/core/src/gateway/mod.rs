//! Chat-completion access behind one trait: live HTTP, fixture replay,
//! scripted responses, and a recorder that turns any backend into fixtures.

mod live;
mod limit;

use std::collections::VecDeque;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use live::{HttpTransport, LiveBackend, LiveConfig, ProviderPreset, ReqwestTransport, RetryPolicy, TransportError};
pub use limit::{Clock, FakeClock, RateLimiter, Sleeper, SystemClock, ThreadSleeper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }

    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Sampling seed. Part of the request hash, so repeated draws of the same
    /// prompt stay distinct under replay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Free-form label for logs; not part of the hash.
    #[serde(default)]
    pub request_tag: String,
}

pub const DEFAULT_MAX_TOKENS: u32 = 1024;

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<ChatMessage>, temperature: f64) -> Self {
        ChatRequest {
            model_id: model_id.into(),
            messages,
            temperature,
            max_tokens: DEFAULT_MAX_TOKENS,
            seed: None,
            request_tag: String::new(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.request_tag = tag.into();
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(0.0..=1.0).contains(&self.temperature) || self.temperature.is_nan() {
            return Err(GatewayError::InvalidRequest(format!("temperature {} outside [0, 1]", self.temperature)));
        }
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        Ok(())
    }

    /// Fixture key: hex SHA-256 of the semantic fields.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            model_id: &'a str,
            messages: &'a [ChatMessage],
            temperature: f64,
            max_tokens: u32,
            seed: Option<u64>,
        }
        let key = Key {
            model_id: &self.model_id,
            messages: &self.messages,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            seed: self.seed,
        };
        let bytes = serde_json::to_vec(&key).expect("request serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Content of the last user message.
    pub fn last_user(&self) -> &str {
        self.messages.iter().rev().find(|m| m.role == Role::User).map(|m| m.content.as_str()).unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Replay,
    Scripted,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Live => "live",
            BackendKind::Replay => "replay",
            BackendKind::Scripted => "scripted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub request: ChatRequest,
    pub response_text: String,
    pub latency_ms: u64,
    pub backend: BackendKind,
    pub attempt: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Auth,
    RateLimit,
    Network,
    Exhausted,
    /// The provider answered, but not with a usable completion.
    Protocol,
}

impl FailureKind {
    pub fn is_retryable(self) -> bool {
        matches!(self, FailureKind::RateLimit | FailureKind::Network)
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum GatewayError {
    #[error("gateway failure ({kind:?}): {message}")]
    Failure { kind: FailureKind, message: String },
    #[error("no replay fixture for request {hash}")]
    ReplayMiss { hash: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("fixture io: {0}")]
    Io(String),
}

impl GatewayError {
    pub fn failure(kind: FailureKind, message: impl Into<String>) -> Self {
        GatewayError::Failure { kind, message: message.into() }
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatExchange, GatewayError>;
    fn kind(&self) -> BackendKind;
}

impl<T: ChatBackend + ?Sized> ChatBackend for Arc<T> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatExchange, GatewayError> {
        (**self).complete(request)
    }

    fn kind(&self) -> BackendKind {
        (**self).kind()
    }
}

type Responder = dyn Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync;

enum Script {
    Queue(Mutex<VecDeque<String>>),
    Func(Box<Responder>),
}

/// Programmable backend. A queue answers in order and fails with
/// `Exhausted` once empty; a function answers from the request itself, which
/// stays deterministic under any scheduling.
pub struct ScriptedBackend {
    script: Script,
}

impl ScriptedBackend {
    pub fn queue<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedBackend { script: Script::Queue(Mutex::new(responses.into_iter().map(Into::into).collect())) }
    }

    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync + 'static,
    {
        ScriptedBackend { script: Script::Func(Box::new(f)) }
    }

    /// Responses still queued (zero for function scripts).
    pub fn remaining(&self) -> usize {
        match &self.script {
            Script::Queue(q) => q.lock().expect("queue lock").len(),
            Script::Func(_) => 0,
        }
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatExchange, GatewayError> {
        request.validate()?;
        let text = match &self.script {
            Script::Queue(q) => q
                .lock()
                .expect("queue lock")
                .pop_front()
                .ok_or_else(|| GatewayError::failure(FailureKind::Exhausted, "scripted queue is empty"))?,
            Script::Func(f) => f(request)?,
        };
        Ok(ChatExchange {
            request: request.clone(),
            response_text: text,
            latency_ms: 0,
            backend: BackendKind::Scripted,
            attempt: 1,
        })
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub request: ChatRequest,
    pub response_text: String,
}

fn fixture_path(dir: &Path, hash: &str) -> PathBuf {
    dir.join(format!("{hash}.json"))
}

/// Answers from a fixture directory holding one `<hash>.json` per request.
pub struct ReplayBackend {
    dir: PathBuf,
}

impl ReplayBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayBackend { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

fn read_fixture(dir: &Path, hash: &str) -> Result<Option<Fixture>, GatewayError> {
    let path = fixture_path(dir, hash);
    match std::fs::read_to_string(&path) {
        Ok(text) => {
            let fx: Fixture = serde_json::from_str(&text)
                .map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
            Ok(Some(fx))
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(GatewayError::Io(format!("{}: {e}", path.display()))),
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatExchange, GatewayError> {
        request.validate()?;
        let hash = request.hash();
        let fx = read_fixture(&self.dir, &hash)?.ok_or(GatewayError::ReplayMiss { hash })?;
        Ok(ChatExchange {
            request: request.clone(),
            response_text: fx.response_text,
            latency_ms: 0,
            backend: BackendKind::Replay,
            attempt: 1,
        })
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Replay
    }
}

/// Wraps a backend and writes a fixture for every completed request.
///
/// A request whose fixture already exists is answered from the fixture, so a
/// recorded run replays exactly even when the wrapped backend would sample a
/// different reply the second time.
pub struct RecordingBackend<B> {
    inner: B,
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| GatewayError::Io(format!("{}: {e}", dir.display())))?;
        Ok(RecordingBackend { inner, dir, write_lock: Mutex::new(()) })
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatExchange, GatewayError> {
        let hash = request.hash();
        let _guard = self.write_lock.lock().expect("recorder lock");
        if let Some(fx) = read_fixture(&self.dir, &hash)? {
            return Ok(ChatExchange {
                request: request.clone(),
                response_text: fx.response_text,
                latency_ms: 0,
                backend: self.inner.kind(),
                attempt: 1,
            });
        }
        drop(_guard);
        let exchange = self.inner.complete(request)?;
        let fx = Fixture { request: request.clone(), response_text: exchange.response_text.clone() };
        let _guard = self.write_lock.lock().expect("recorder lock");
        let path = fixture_path(&self.dir, &hash);
        if !path.exists() {
            let body = serde_json::to_string_pretty(&fx).expect("fixture serializes");
            std::fs::write(&path, body).map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(exchange)
    }

    fn kind(&self) -> BackendKind {
        self.inner.kind()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(t: f64) -> ChatRequest {
        ChatRequest::new("gpt-4o", vec![ChatMessage::user("hi")], t)
    }

    #[test]
    fn hash_ignores_tag_only() {
        let a = req(0.1).with_tag("x");
        let b = req(0.1).with_tag("y");
        assert_eq!(a.hash(), b.hash());
        assert_ne!(req(0.1).hash(), req(0.7).hash());
        assert_ne!(req(0.1).hash(), req(0.1).with_seed(1).hash());
        let mut c = req(0.1);
        c.max_tokens = 10;
        assert_ne!(c.hash(), req(0.1).hash());
    }

    #[test]
    fn validation() {
        assert!(matches!(req(1.5).validate(), Err(GatewayError::InvalidRequest(_))));
        let empty = ChatRequest::new("m", vec![], 0.5);
        assert!(empty.validate().is_err());
    }

    #[test]
    fn scripted_queue_in_order() {
        let b = ScriptedBackend::queue(["a", "b"]);
        assert_eq!(b.complete(&req(0.1)).unwrap().response_text, "a");
        assert_eq!(b.complete(&req(0.1)).unwrap().response_text, "b");
        assert!(matches!(
            b.complete(&req(0.1)),
            Err(GatewayError::Failure { kind: FailureKind::Exhausted, .. })
        ));
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let rec = RecordingBackend::new(ScriptedBackend::queue(["first", "second"]), dir.path()).unwrap();
        assert_eq!(rec.complete(&req(0.1)).unwrap().response_text, "first");
        // Same hash: answered from the fixture, queue untouched.
        assert_eq!(rec.complete(&req(0.1).with_tag("again")).unwrap().response_text, "first");
        assert_eq!(rec.complete(&req(0.7)).unwrap().response_text, "second");

        let replay = ReplayBackend::new(dir.path());
        let ex = replay.complete(&req(0.7)).unwrap();
        assert_eq!(ex.response_text, "second");
        assert_eq!(ex.backend, BackendKind::Replay);
        let miss = replay.complete(&req(0.3)).unwrap_err();
        assert_eq!(miss, GatewayError::ReplayMiss { hash: req(0.3).hash() });
    }
}
