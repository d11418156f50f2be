use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use ureq::Agent;

use super::{ChatBackend, ChatRequest, ChatResponse, EmbedBackend, EmbeddingVector, GatewayError};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

fn agent(timeout: Duration) -> Agent {
    Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(timeout))
        .build()
        .into()
}

fn join(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path)
}

fn transport(e: ureq::Error) -> GatewayError {
    GatewayError::Transport(e.to_string())
}

/// Maps a non-2xx status onto the gateway error taxonomy.
fn status_error(status: u16, retry_after: Option<&str>, body: String) -> GatewayError {
    match status {
        401 | 403 => GatewayError::Auth { status },
        429 => GatewayError::RateLimited {
            retry_after: retry_after
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs),
        },
        s if s >= 500 => GatewayError::Transport(format!("HTTP {s}: {body}")),
        s => GatewayError::Http { status: s, body },
    }
}

fn post_json(agent: &Agent, url: &str, api_key: Option<&str>, body: String) -> Result<String, GatewayError> {
    let mut req = agent.post(url).header("content-type", "application/json");
    if let Some(key) = api_key {
        req = req.header("authorization", format!("Bearer {key}"));
    }
    let mut resp = req.send(body).map_err(transport)?;
    let status = resp.status().as_u16();
    let retry_after = resp
        .headers()
        .get("retry-after")
        .and_then(|v| v.to_str().ok())
        .map(str::to_owned);
    let text = resp.body_mut().read_to_string().map_err(transport)?;
    if (200..300).contains(&status) {
        Ok(text)
    } else {
        Err(status_error(status, retry_after.as_deref(), text))
    }
}

/// Chat-completions client: `POST {base}/chat/completions`.
pub struct HttpChatBackend {
    base_url: String,
    api_key: Option<String>,
    agent: Agent,
}

impl HttpChatBackend {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Self {
        Self::with_timeout(base_url, api_key, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(base_url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        Self {
            base_url: base_url.into(),
            api_key,
            agent: agent(timeout),
        }
    }

    /// Reads the credential from the named environment variable. An unset
    /// or empty variable means no `Authorization` header is sent.
    pub fn from_env(base_url: impl Into<String>, api_key_env: &str) -> Self {
        let key = std::env::var(api_key_env).ok().filter(|k| !k.is_empty());
        Self::new(base_url, key)
    }
}

impl ChatBackend for HttpChatBackend {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let started = Instant::now();
        let url = join(&self.base_url, "chat/completions");
        let text = post_json(&self.agent, &url, self.api_key.as_deref(), request.to_wire_json())?;
        let json: Value =
            serde_json::from_str(&text).map_err(|e| GatewayError::InvalidResponse(format!("body is not JSON: {e}")))?;
        let content = json
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| GatewayError::InvalidResponse("missing choices[0].message.content".into()))?;
        Ok(ChatResponse {
            content: content.to_string(),
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}

#[derive(Serialize)]
struct WireEmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct WireEmbedResponse {
    vectors: Vec<Vec<f64>>,
    #[serde(default)]
    dim: Option<usize>,
}

/// The JSON body POSTed to `{embed_base}/embed`.
pub fn embed_request_body(texts: &[String]) -> String {
    serde_json::to_string(&WireEmbedRequest { texts }).expect("embed request serializes")
}

/// Embedding client: `POST {embed_base}/embed`.
pub struct HttpEmbedBackend {
    base_url: String,
    agent: Agent,
}

impl HttpEmbedBackend {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            agent: agent(DEFAULT_TIMEOUT),
        }
    }
}

impl EmbedBackend for HttpEmbedBackend {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        let url = join(&self.base_url, "embed");
        let text = post_json(&self.agent, &url, None, embed_request_body(texts))?;
        let wire: WireEmbedResponse = serde_json::from_str(&text)
            .map_err(|e| GatewayError::InvalidResponse(format!("bad embed response: {e}")))?;
        if let Some(dim) = wire.dim {
            if let Some(v) = wire.vectors.iter().find(|v| v.len() != dim) {
                return Err(GatewayError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
        }
        Ok(wire.vectors.into_iter().map(EmbeddingVector::new).collect())
    }
}
