//! Greedy selection rules.
//!
//! Both selections walk the candidates once and replace the incumbent only
//! on a strictly greater score, so among equal scores the earliest wins.

use crate::domain::ScoredThought;

use super::ChainError;

/// Index of the first thought holding the maximum score.
pub fn greedy_pick(thoughts: &[ScoredThought]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, t) in thoughts.iter().enumerate() {
        match best {
            Some(b) if thoughts[b].score() >= t.score() => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Grid the weighted score is snapped to. Equal weighted sums of integer
/// scores can differ in the last bit (0.6·0 + 0.4·9 vs 0.6·2 + 0.4·6);
/// snapping makes them the same double so ties stay ties.
const SCORE_GRID: f64 = 1e9;

/// `weight_compat * confidence + weight_prior * prior`, snapped to 1e-9.
pub fn weighted_score(weight_compat: f64, weight_prior: f64, confidence: u8, prior: u8) -> f64 {
    let raw = weight_compat * f64::from(confidence) + weight_prior * f64::from(prior);
    (raw * SCORE_GRID).round() / SCORE_GRID
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub text: String,
    pub final_score: f64,
    /// Weighted score of every meaning, in input order.
    pub finals: Vec<f64>,
}

/// Chooses the meaning with the highest weighted score, earliest on ties.
pub fn select_meaning(
    meanings: &[ScoredThought],
    compat: &[u8],
    weight_compat: f64,
    weight_prior: f64,
) -> Result<Selection, ChainError> {
    if meanings.is_empty() {
        return Err(ChainError::EmptyCandidates);
    }
    if meanings.len() != compat.len() {
        return Err(ChainError::LengthMismatch {
            meanings: meanings.len(),
            scores: compat.len(),
        });
    }
    let finals: Vec<f64> = meanings
        .iter()
        .zip(compat)
        .map(|(m, c)| weighted_score(weight_compat, weight_prior, *c, m.score()))
        .collect();
    let mut index = 0;
    for (i, f) in finals.iter().enumerate().skip(1) {
        if finals[index] < *f {
            index = i;
        }
    }
    Ok(Selection {
        index,
        text: meanings[index].text().to_string(),
        final_score: finals[index],
        finals,
    })
}
