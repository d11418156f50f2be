//! JSON-lines record files and LLM-assisted cleanup.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use thiserror::Error;

use crate::chain::{extract_object, Bindings, Chain, ChainError, ParseError, PromptSet, Stage};
use crate::domain::{validate_record, ChainConfig, Exchange, SlangRecord, ValidationError};
use crate::gateway::Gateway;
use crate::harness::for_each_ordered;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: {source}")]
    Validation {
        line: usize,
        #[source]
        source: ValidationError,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Parses JSON-lines text. Blank lines are skipped; line numbers are 1-based
/// and count blank lines.
pub fn parse_records(text: &str) -> Result<Vec<SlangRecord>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| DatasetError::Parse {
            line: line_no,
            reason: e.to_string(),
        })?;
        let map = value.as_object().ok_or_else(|| DatasetError::Parse {
            line: line_no,
            reason: "expected a JSON object".into(),
        })?;
        let record = validate_record(map).map_err(|source| DatasetError::Validation { line: line_no, source })?;
        out.push(record);
    }
    Ok(out)
}

/// Loads records in file order. With `limit` and `seed`, draws a uniform
/// sample of `limit` records using a seeded ChaCha8 generator, kept in file
/// order. With `limit` alone, takes the first `limit` records.
pub fn load_records(path: &Path, limit: Option<usize>, seed: Option<u64>) -> Result<Vec<SlangRecord>, DatasetError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(DatasetError::FileNotFound(path.to_path_buf())),
        Err(e) => return Err(e.into()),
    };
    let records = parse_records(&text)?;
    Ok(match limit {
        Some(n) if n < records.len() => match seed {
            Some(seed) => sample(records, n, seed),
            None => records.into_iter().take(n).collect(),
        },
        _ => records,
    })
}

fn sample(records: Vec<SlangRecord>, n: usize, seed: u64) -> Vec<SlangRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, records.len(), n).into_vec();
    picked.sort_unstable();
    let mut keep = vec![false; records.len()];
    for i in picked {
        keep[i] = true;
    }
    records
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect()
}

pub fn write_records<W: Write>(mut out: W, records: &[SlangRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RephraseError {
    /// The model judged meaning and example incompatible; drop the record.
    #[error("meaning and example do not match")]
    Mismatch,
    #[error(transparent)]
    Chain(#[from] ChainError),
}

enum Rephrased {
    Mismatch,
    Fields { meaning: String, example: String },
}

fn parse_rephrase(raw: &str) -> Result<Rephrased, ParseError> {
    let map = extract_object(raw)?;
    if map.get("mismatch").and_then(Value::as_bool) == Some(true) {
        return Ok(Rephrased::Mismatch);
    }
    let field = |key: &str| match map.get(key) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.trim().to_string()),
        Some(_) => Err(ParseError::InvalidThought { key: key.to_string() }),
        None => Err(ParseError::MissingKey(key.to_string())),
    };
    Ok(Rephrased::Fields {
        meaning: field("meaning")?,
        example: field("example")?,
    })
}

/// Asks the model to restate the meaning as one sentence and recast the
/// example as a short A:/B: dialogue. Any `word` the model returns is
/// ignored.
pub fn rephrase_record(
    record: &SlangRecord,
    config: &ChainConfig,
    prompts: &PromptSet,
    gateway: &Gateway,
) -> Result<SlangRecord, RephraseError> {
    let chain = Chain::new(gateway, prompts, config);
    let mut bindings = Bindings::new();
    bindings.insert("slang_word", record.word().to_string());
    bindings.insert("original_meaning", record.ground_truth_meaning().to_string());
    bindings.insert("original_context", record.usage_example().to_string());
    let mut exchanges: Vec<Exchange> = Vec::new();
    match chain.ask(Stage::Rephrase, &bindings, &mut exchanges, parse_rephrase)? {
        Rephrased::Mismatch => Err(RephraseError::Mismatch),
        Rephrased::Fields { meaning, example } => Ok(record
            .with_rephrased(meaning, example)
            .expect("fields checked non-empty")),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PreprocessCounts {
    pub kept: usize,
    pub dropped: usize,
    pub failed: usize,
}

impl PreprocessCounts {
    pub fn total(&self) -> usize {
        self.kept + self.dropped + self.failed
    }
}

/// Rephrases every record of `in_path` and writes the kept ones to
/// `out_path` in input order. Records run concurrently up to the gateway's
/// in-flight cap.
pub fn preprocess_dataset(
    in_path: &Path,
    out_path: &Path,
    config: &ChainConfig,
    prompts: &PromptSet,
    gateway: &Gateway,
) -> Result<PreprocessCounts, DatasetError> {
    let records = load_records(in_path, None, None)?;
    let results = for_each_ordered(&records, gateway.max_in_flight(), |r| {
        rephrase_record(r, config, prompts, gateway)
    });
    let mut counts = PreprocessCounts::default();
    let mut out = BufWriter::new(fs::File::create(out_path)?);
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok(r) => {
                write_records(&mut out, std::slice::from_ref(&r))?;
                counts.kept += 1;
            }
            Err(RephraseError::Mismatch) => counts.dropped += 1,
            Err(RephraseError::Chain(e)) => {
                log::warn!("record {} ({}): {e}", record.id(), record.word());
                counts.failed += 1;
            }
        }
    }
    out.flush()?;
    Ok(counts)
}
