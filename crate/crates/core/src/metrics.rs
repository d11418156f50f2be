//! Text similarity: sentence-level ROUGE-L and embedding cosine.

use thiserror::Error;

use crate::domain::{ChainTrace, EvalScores, SlangRecord};
use crate::gateway::{EmbeddingVector, Gateway, GatewayError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cannot take cosine of a zero vector")]
    ZeroVector,
    #[error("no candidates to choose from")]
    EmptyCandidates,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Lowercase tokens, none empty.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: AsRef<str>> FromIterator<S> for TokenSequence {
    /// Empty items are dropped to keep the no-empty-token invariant.
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSequence(
            iter.into_iter()
                .map(|s| s.as_ref().to_lowercase())
                .filter(|s| !s.is_empty())
                .collect(),
        )
    }
}

/// Lowercases, then splits on every maximal run of non-alphanumeric
/// characters.
pub fn tokenize(text: &str) -> TokenSequence {
    TokenSequence(
        text.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_owned)
            .collect(),
    )
}

/// Longest common subsequence length, O(|a|·|b|) time and O(min) space.
pub fn lcs_length(a: &TokenSequence, b: &TokenSequence) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; short.len() + 1];
    let mut cur = vec![0usize; short.len() + 1];
    for x in long.tokens() {
        for (j, y) in short.tokens().iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RougeL {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean, zero when both inputs are zero.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn rouge_l_tokens(candidate: &TokenSequence, reference: &TokenSequence) -> RougeL {
    let lcs = lcs_length(candidate, reference);
    let precision = ratio(lcs, candidate.len());
    let recall = ratio(lcs, reference.len());
    RougeL {
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

/// Sentence-level ROUGE-L with β = 1.
pub fn rouge_l(candidate: &str, reference: &str) -> RougeL {
    rouge_l_tokens(&tokenize(candidate), &tokenize(reference))
}

pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, MetricsError> {
    let (a, b) = (u.values(), v.values());
    if a.len() != b.len() {
        return Err(MetricsError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(MetricsError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn embed_similarity(candidate: &str, reference: &str, gateway: &Gateway) -> Result<f64, MetricsError> {
    let v = gateway.embed(&[candidate.to_string(), reference.to_string()])?;
    cosine_similarity(&v[0], &v[1])
}

/// One similarity per (candidate, reference) pair, in input order, using a
/// single embedding batch.
pub fn embed_similarity_batch(pairs: &[(String, String)], gateway: &Gateway) -> Result<Vec<f64>, MetricsError> {
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    let texts: Vec<String> = pairs.iter().flat_map(|(c, r)| [c.clone(), r.clone()]).collect();
    let v = gateway.embed(&texts)?;
    v.chunks(2).map(|p| cosine_similarity(&p[0], &p[1])).collect()
}

/// Picks the candidate most similar to the reference; the earliest wins a
/// tie. Needs the ground truth, so it is a diagnostic only.
pub fn oracle_best(candidates: &[String], reference: &str, gateway: &Gateway) -> Result<(String, f64), MetricsError> {
    if candidates.is_empty() {
        return Err(MetricsError::EmptyCandidates);
    }
    let pairs: Vec<(String, String)> = candidates.iter().map(|c| (c.clone(), reference.to_string())).collect();
    let sims = embed_similarity_batch(&pairs, gateway)?;
    let mut best = 0;
    for (i, s) in sims.iter().enumerate().skip(1) {
        if sims[best] < *s {
            best = i;
        }
    }
    Ok((candidates[best].clone(), sims[best]))
}

/// Scores a finished trace. An embedding failure leaves `embed_sim` absent
/// with the error noted; the ROUGE fields are always set.
pub fn score_result(trace: &ChainTrace, record: &SlangRecord, gateway: &Gateway) -> EvalScores {
    let reference = record.ground_truth_meaning();
    let r = rouge_l(&trace.final_meaning, reference);
    let (embed_sim, embed_error) = match embed_similarity(&trace.final_meaning, reference, gateway) {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    };
    EvalScores {
        rouge_precision: r.precision,
        rouge_recall: r.recall,
        rouge_f1: r.f1,
        embed_sim,
        embed_error,
    }
}
