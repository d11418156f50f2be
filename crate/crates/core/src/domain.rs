//! Value types shared across the pipeline.
//!
//! Everything here is immutable once constructed. Constructors validate, so
//! any value that exists satisfies its invariants.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Lowest confidence score a thought may carry.
pub const MIN_SCORE: u8 = 0;
/// Highest confidence score a thought may carry.
pub const MAX_SCORE: u8 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("field `{0}` is empty")]
    EmptyField(String),
    #[error("field `{0}` must be a string")]
    WrongType(String),
    #[error("score {0} is outside 0..=10")]
    ScoreOutOfRange(i64),
    #[error("thought text is empty")]
    EmptyThought,
}

/// One dataset row: a slang word, its ground-truth meaning, and a usage example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRecord", into = "RawRecord")]
pub struct SlangRecord {
    word: String,
    ground_truth_meaning: String,
    usage_example: String,
    explicit_id: Option<String>,
}

/// On-disk shape of a record.
#[derive(Serialize, Deserialize)]
struct RawRecord {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    id: Option<String>,
    word: String,
    meaning: String,
    example: String,
}

impl TryFrom<RawRecord> for SlangRecord {
    type Error = ValidationError;

    fn try_from(raw: RawRecord) -> Result<Self, Self::Error> {
        SlangRecord::new(raw.word, raw.meaning, raw.example, raw.id)
    }
}

impl From<SlangRecord> for RawRecord {
    fn from(r: SlangRecord) -> Self {
        RawRecord {
            id: r.explicit_id,
            word: r.word,
            meaning: r.ground_truth_meaning,
            example: r.usage_example,
        }
    }
}

fn non_empty(key: &str, value: String) -> Result<String, ValidationError> {
    if value.trim().is_empty() {
        Err(ValidationError::EmptyField(key.to_string()))
    } else {
        Ok(value)
    }
}

impl SlangRecord {
    pub fn new(
        word: impl Into<String>,
        meaning: impl Into<String>,
        example: impl Into<String>,
        id: Option<String>,
    ) -> Result<Self, ValidationError> {
        let word = non_empty("word", word.into())?;
        let ground_truth_meaning = non_empty("meaning", meaning.into())?;
        let usage_example = non_empty("example", example.into())?;
        // A blank id is treated as absent.
        let explicit_id = id.filter(|s| !s.trim().is_empty());
        Ok(Self {
            word,
            ground_truth_meaning,
            usage_example,
            explicit_id,
        })
    }

    pub fn word(&self) -> &str {
        &self.word
    }

    pub fn ground_truth_meaning(&self) -> &str {
        &self.ground_truth_meaning
    }

    pub fn usage_example(&self) -> &str {
        &self.usage_example
    }

    /// The stable identifier: the explicit id when present, otherwise the
    /// first 16 hex digits of SHA-256 over `word`, a unit separator, and
    /// `example`.
    pub fn id(&self) -> String {
        match &self.explicit_id {
            Some(id) => id.clone(),
            None => derived_id(&self.word, &self.usage_example),
        }
    }

    pub fn explicit_id(&self) -> Option<&str> {
        self.explicit_id.as_deref()
    }

    /// Returns a copy with meaning and example replaced. The word and any
    /// explicit id are kept.
    pub fn with_rephrased(
        &self,
        meaning: impl Into<String>,
        example: impl Into<String>,
    ) -> Result<Self, ValidationError> {
        SlangRecord::new(self.word.clone(), meaning, example, self.explicit_id.clone())
    }
}

fn derived_id(word: &str, example: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(word.as_bytes());
    hasher.update([0x1f]);
    hasher.update(example.as_bytes());
    let digest = hasher.finalize();
    hex::encode(&digest[..8])
}

/// Builds a record from a loosely-typed field map (`word`, `meaning`,
/// `example`, optional `id`).
pub fn validate_record(raw: &Map<String, Value>) -> Result<SlangRecord, ValidationError> {
    fn field(raw: &Map<String, Value>, key: &str) -> Result<String, ValidationError> {
        match raw.get(key) {
            None | Some(Value::Null) => Err(ValidationError::MissingField(key.to_string())),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(ValidationError::WrongType(key.to_string())),
        }
    }
    let word = field(raw, "word")?;
    let meaning = field(raw, "meaning")?;
    let example = field(raw, "example")?;
    let id = match raw.get("id") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(Value::Number(n)) => Some(n.to_string()),
        Some(_) => return Err(ValidationError::WrongType("id".to_string())),
    };
    SlangRecord::new(word, meaning, example, id)
}

/// A candidate (category or meaning) proposed by the model, with its
/// confidence score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawThought")]
pub struct ScoredThought {
    text: String,
    score: u8,
}

#[derive(Deserialize)]
struct RawThought {
    text: String,
    score: i64,
}

impl TryFrom<RawThought> for ScoredThought {
    type Error = ValidationError;

    fn try_from(raw: RawThought) -> Result<Self, Self::Error> {
        ScoredThought::new(raw.text, raw.score)
    }
}

impl ScoredThought {
    pub fn new(text: impl Into<String>, score: i64) -> Result<Self, ValidationError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ValidationError::EmptyThought);
        }
        if !(i64::from(MIN_SCORE)..=i64::from(MAX_SCORE)).contains(&score) {
            return Err(ValidationError::ScoreOutOfRange(score));
        }
        Ok(Self {
            text,
            score: score as u8,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn score(&self) -> u8 {
        self.score
    }
}

impl fmt::Display for ScoredThought {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.text, self.score)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Single direct question, no intermediate steps.
    Io,
    /// Category, meaning list, compatibility check.
    GreedyCot,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Io => "io",
            Strategy::GreedyCot => "greedy_cot",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("temperature must be a finite value >= 0, got {0}")]
    Temperature(f64),
    #[error("width must be between 1 and {max}, got {got}")]
    Width { got: usize, max: usize },
    #[error("depth must be 3 for the greedy chain, got {0}")]
    Depth(usize),
    #[error("weights must be finite and sum to 1, got {compat} + {prior}")]
    Weights { compat: f64, prior: f64 },
    #[error("model id is empty")]
    EmptyModel,
}

/// Number of stages in the greedy chain: category, meanings, compatibility.
pub const CHAIN_DEPTH: usize = 3;
/// Widest candidate list the ordinal JSON keys can express.
pub const MAX_WIDTH: usize = 10;

/// Every knob of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub model_id: String,
    pub temperature: f64,
    pub width: usize,
    pub depth: usize,
    pub weight_compat: f64,
    pub weight_prior: f64,
    pub max_retries: u32,
    pub strategy: Strategy,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            model_id: "qwen2-7b-instruct".to_string(),
            temperature: 0.3,
            width: 3,
            depth: CHAIN_DEPTH,
            weight_compat: 0.6,
            weight_prior: 0.4,
            max_retries: 2,
            strategy: Strategy::GreedyCot,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.model_id.trim().is_empty() {
            return Err(ConfigError::EmptyModel);
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(ConfigError::Temperature(self.temperature));
        }
        if self.width == 0 || self.width > MAX_WIDTH {
            return Err(ConfigError::Width {
                got: self.width,
                max: MAX_WIDTH,
            });
        }
        if self.strategy == Strategy::GreedyCot && self.depth != CHAIN_DEPTH {
            return Err(ConfigError::Depth(self.depth));
        }
        let (c, p) = (self.weight_compat, self.weight_prior);
        if !c.is_finite() || !p.is_finite() || (c + p - 1.0).abs() > 1e-12 {
            return Err(ConfigError::Weights { compat: c, prior: p });
        }
        Ok(())
    }

    pub fn with_strategy(&self, strategy: Strategy) -> Self {
        Self {
            strategy,
            ..self.clone()
        }
    }

    pub fn with_temperature(&self, temperature: f64) -> Self {
        Self {
            temperature,
            ..self.clone()
        }
    }
}

/// Compatibility result for one stage-2 meaning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatScore {
    pub meaning_index: usize,
    pub confidence: u8,
    pub final_score: f64,
}

/// One prompt sent to the model and the text that came back.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub prompt: String,
    pub response: String,
}

/// Audit record of one inference. On failure `error` is set and
/// `final_meaning` is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub record_id: String,
    pub word: String,
    pub strategy: Strategy,
    pub category_candidates: Vec<ScoredThought>,
    pub selected_category: Option<ScoredThought>,
    /// The generated meaning set the final answer is drawn from.
    pub meaning_candidates: Vec<ScoredThought>,
    pub compat_scores: Vec<CompatScore>,
    pub final_meaning: String,
    pub final_score: Option<f64>,
    pub raw_exchanges: Vec<Exchange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ChainTrace {
    pub fn new(record: &SlangRecord, strategy: Strategy) -> Self {
        Self {
            record_id: record.id(),
            word: record.word().to_string(),
            strategy,
            category_candidates: Vec::new(),
            selected_category: None,
            meaning_candidates: Vec::new(),
            compat_scores: Vec::new(),
            final_meaning: String::new(),
            final_score: None,
            raw_exchanges: Vec::new(),
            error: None,
        }
    }

    pub fn is_success(&self) -> bool {
        self.error.is_none() && !self.final_meaning.is_empty()
    }
}

/// Metric values for one generated meaning against its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalScores {
    pub rouge_precision: f64,
    pub rouge_recall: f64,
    pub rouge_f1: f64,
    /// Absent when the embedding backend failed for this record.
    pub embed_sim: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_error: Option<String>,
}

/// Means over the records of one row. `embed_sim` averages only the
/// records that have one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanScores {
    pub rouge_precision: f64,
    pub rouge_recall: f64,
    pub rouge_f1: f64,
    pub embed_sim: Option<f64>,
    pub embed_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model_id: String,
    pub temperature: f64,
    pub strategy: Strategy,
    /// Records with a successful trace; only these enter the means.
    pub record_count: usize,
    pub failed_count: usize,
    pub means: Option<MeanScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordResult {
    pub record_id: String,
    pub model_id: String,
    pub temperature: f64,
    pub strategy: Strategy,
    pub scores: Option<EvalScores>,
    pub final_meaning: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub per_record: Vec<RecordResult>,
}

impl ExperimentReport {
    pub fn merge(&mut self, other: ExperimentReport) {
        self.rows.extend(other.rows);
        self.per_record.extend(other.per_record);
    }
}
