//! Offline backends driven by a fixed script.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, ChatResponse, EmbedBackend, EmbeddingVector, GatewayError, HashingEmbedder};

/// How a script entry decides whether it answers a prompt. Matching is
/// against the user prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    Exact(String),
    Contains(String),
}

impl Matcher {
    pub fn matches(&self, prompt: &str) -> bool {
        match self {
            Matcher::Exact(s) => prompt == s,
            Matcher::Contains(s) => prompt.contains(s.as_str()),
        }
    }
}

/// Script file form: `{"contains": "...", "response": "..."}` or
/// `{"exact": "...", "response": "..."}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(flatten)]
    pub matcher: Matcher,
    pub response: String,
}

impl ScriptEntry {
    pub fn contains(pattern: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            matcher: Matcher::Contains(pattern.into()),
            response: response.into(),
        }
    }

    pub fn exact(prompt: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            matcher: Matcher::Exact(prompt.into()),
            response: response.into(),
        }
    }
}

#[derive(Debug)]
struct ScriptState {
    consumed: Vec<bool>,
    calls: usize,
    log: Vec<ChatRequest>,
}

/// Chat backend that answers each prompt with the first unconsumed entry
/// whose matcher accepts it, consuming that entry.
#[derive(Debug)]
pub struct ScriptedChat {
    entries: Vec<ScriptEntry>,
    state: Mutex<ScriptState>,
}

impl ScriptedChat {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let n = entries.len();
        Self {
            entries,
            state: Mutex::new(ScriptState {
                consumed: vec![false; n],
                calls: 0,
                log: Vec::new(),
            }),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(text)?))
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// Total chat calls received, matched or not.
    pub fn calls(&self) -> usize {
        self.state.lock().unwrap().calls
    }

    pub fn remaining(&self) -> usize {
        self.state.lock().unwrap().consumed.iter().filter(|c| !**c).count()
    }

    /// Requests received so far, in arrival order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.state.lock().unwrap().log.clone()
    }
}

impl ChatBackend for ScriptedChat {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut state = self.state.lock().unwrap();
        state.calls += 1;
        state.log.push(request.clone());
        let hit = self
            .entries
            .iter()
            .enumerate()
            .find(|(i, e)| !state.consumed[*i] && e.matcher.matches(&request.user_prompt))
            .map(|(i, _)| i);
        match hit {
            Some(i) => {
                state.consumed[i] = true;
                Ok(ChatResponse {
                    content: self.entries[i].response.clone(),
                    latency_ms: 0,
                })
            }
            None => {
                let excerpt: String = request.user_prompt.chars().take(80).collect();
                Err(GatewayError::ScriptExhausted(excerpt))
            }
        }
    }
}

/// Embedding backend with fixed vectors for chosen texts. Other texts go to
/// the fallback embedder when one is set, otherwise they are an error.
#[derive(Debug, Default)]
pub struct ScriptedEmbedder {
    fixed: HashMap<String, Vec<f64>>,
    fallback: Option<HashingEmbedder>,
}

impl ScriptedEmbedder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_vector(mut self, text: impl Into<String>, vector: Vec<f64>) -> Self {
        self.fixed.insert(text.into(), vector);
        self
    }

    pub fn with_fallback(mut self, fallback: HashingEmbedder) -> Self {
        self.fallback = Some(fallback);
        self
    }
}

impl EmbedBackend for ScriptedEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        texts
            .iter()
            .map(|t| match (self.fixed.get(t), &self.fallback) {
                (Some(v), _) => Ok(EmbeddingVector::new(v.clone())),
                (None, Some(f)) => Ok(f.embed_one(t)),
                (None, None) => Err(GatewayError::Unscripted(t.clone())),
            })
            .collect()
    }
}
