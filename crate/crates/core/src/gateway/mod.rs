//! Access to chat-completion and embedding backends.
//!
//! [`Gateway`] wraps a [`ChatBackend`] and an optional [`EmbedBackend`] with
//! the retry policy and the in-flight request cap. The backends themselves
//! only know how to make one call.

mod hashing;
mod http;
mod retry;
mod scripted;

use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hashing::HashingEmbedder;
pub use http::{embed_request_body, HttpChatBackend, HttpEmbedBackend, DEFAULT_TIMEOUT};
pub use retry::RetryPolicy;
pub use scripted::{Matcher, ScriptEntry, ScriptedChat, ScriptedEmbedder};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("rate limited")]
    RateLimited { retry_after: Option<Duration> },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("no scripted response matches prompt: {0}")]
    ScriptExhausted(String),
    #[error("no scripted embedding for text: {0}")]
    Unscripted(String),
    #[error("embedding batch is empty")]
    EmptyBatch,
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no embedding backend configured")]
    NoEmbedder,
}

impl GatewayError {
    /// Transport failures, 5xx responses and rate limits are worth another
    /// attempt; everything else is final.
    pub fn is_retryable(&self) -> bool {
        matches!(self, GatewayError::Transport(_) | GatewayError::RateLimited { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireChatRequest<'a> {
    model: &'a str,
    messages: [WireMessage<'a>; 2],
    temperature: f64,
}

impl ChatRequest {
    /// The JSON body POSTed to `{base}/chat/completions`.
    pub fn to_wire_json(&self) -> String {
        let wire = WireChatRequest {
            model: &self.model_id,
            messages: [
                WireMessage {
                    role: "system",
                    content: &self.system_prompt,
                },
                WireMessage {
                    role: "user",
                    content: &self.user_prompt,
                },
            ],
            temperature: self.temperature,
        };
        serde_json::to_string(&wire).expect("chat request serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResponse {
    pub content: String,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }
}

impl From<Vec<f64>> for EmbeddingVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

pub trait ChatBackend: Send + Sync {
    /// One attempt, no retries.
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

pub trait EmbedBackend: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError>;
}

/// Counting semaphore bounding concurrent backend calls.
#[derive(Debug)]
struct InFlight {
    cap: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(cap: usize) -> Self {
        Self {
            cap: cap.max(1),
            used: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock().unwrap();
        while *used >= self.cap {
            used = self.freed.wait(used).unwrap();
        }
        *used += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut used = self.0.used.lock().unwrap();
        *used -= 1;
        self.0.freed.notify_one();
    }
}

pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

pub struct Gateway {
    chat: Arc<dyn ChatBackend>,
    embedder: Option<Arc<dyn EmbedBackend>>,
    retry: RetryPolicy,
    slots: InFlight,
}

impl Gateway {
    pub fn new(chat: Arc<dyn ChatBackend>) -> Self {
        Self {
            chat,
            embedder: None,
            retry: RetryPolicy::default(),
            slots: InFlight::new(DEFAULT_MAX_IN_FLIGHT),
        }
    }

    pub fn with_embedder(mut self, embedder: Arc<dyn EmbedBackend>) -> Self {
        self.embedder = Some(embedder);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, cap: usize) -> Self {
        self.slots = InFlight::new(cap);
        self
    }

    pub fn max_in_flight(&self) -> usize {
        self.slots.cap
    }

    pub fn retry_policy(&self) -> &RetryPolicy {
        &self.retry
    }

    pub fn has_embedder(&self) -> bool {
        self.embedder.is_some()
    }

    /// Sends one chat request, retrying transient failures.
    pub fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.retry.run(|| {
            let _permit = self.slots.acquire();
            let started = Instant::now();
            let mut response = self.chat.chat(request)?;
            if response.latency_ms == 0 {
                response.latency_ms = started.elapsed().as_millis() as u64;
            }
            Ok(response)
        })
    }

    /// Embeds a batch, one vector per text in input order.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::EmptyBatch);
        }
        let embedder = self.embedder.as_ref().ok_or(GatewayError::NoEmbedder)?;
        let vectors = self.retry.run(|| {
            let _permit = self.slots.acquire();
            embedder.embed(texts)
        })?;
        if vectors.len() != texts.len() {
            return Err(GatewayError::InvalidResponse(format!(
                "expected {} vectors, got {}",
                texts.len(),
                vectors.len()
            )));
        }
        let dim = vectors[0].dimension();
        if dim == 0 {
            return Err(GatewayError::InvalidResponse("zero-length vector".into()));
        }
        if let Some(v) = vectors.iter().find(|v| v.dimension() != dim) {
            return Err(GatewayError::DimensionMismatch {
                expected: dim,
                got: v.dimension(),
            });
        }
        Ok(vectors)
    }
}
