//! Extraction of scored thoughts from model output.
//!
//! Models wrap JSON in code fences and prose, and often copy the comma-less
//! layout of the schema shown in the prompt. The object is cut out from the
//! first `{` to its matching `}` and, if strict parsing fails, retried once
//! with missing commas between lines restored.

use std::sync::LazyLock;

use regex::Regex;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::domain::{ScoredThought, MAX_SCORE, MAX_WIDTH};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no JSON object in response: {0}")]
    MalformedJson(String),
    #[error("response is missing key `{0}`")]
    MissingKey(String),
    #[error("`{key}` is {value}, outside 0..=10")]
    ScoreOutOfRange { key: String, value: i64 },
    #[error("`{key}` is not an integer score")]
    NonIntegerScore { key: String },
    #[error("`{key}` must be a non-empty string")]
    InvalidThought { key: String },
    #[error("cannot request {0} thoughts; at most {MAX_WIDTH} are supported")]
    TooWide(usize),
}

const ORDINALS: [&str; MAX_WIDTH] = [
    "First", "Second", "Third", "Fourth", "Fifth", "Sixth", "Seventh", "Eighth", "Ninth", "Tenth",
];

pub const CONFIDENCE_KEY: &str = "Your_Confidence_Score";

/// Key pair for the `n`-th thought (0-based).
pub fn thought_keys(n: usize) -> (String, String) {
    let ord = ORDINALS[n];
    (format!("Your_{ord}_Thought"), format!("Your_{ord}_Thought_Score"))
}

/// The slice from the first `{` to its matching `}`, honouring JSON strings.
fn find_object(raw: &str) -> Option<&str> {
    let start = raw.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in raw[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&raw[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

static MISSING_COMMA: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"("|\d|true|false|null|\}|\])([ \t]*\r?\n\s*")"#).expect("valid regex"));

fn excerpt(raw: &str) -> String {
    let s: String = raw.chars().take(120).collect();
    if raw.chars().count() > 120 {
        format!("{s}...")
    } else {
        s
    }
}

/// Finds and parses the JSON object embedded in a model response.
pub fn extract_object(raw: &str) -> Result<Map<String, Value>, ParseError> {
    let candidate = find_object(raw).ok_or_else(|| ParseError::MalformedJson(excerpt(raw)))?;
    let value = serde_json::from_str::<Value>(candidate).or_else(|_| {
        let repaired = MISSING_COMMA.replace_all(candidate, "$1,$2");
        serde_json::from_str::<Value>(&repaired)
    });
    match value {
        Ok(Value::Object(map)) => Ok(map),
        _ => Err(ParseError::MalformedJson(excerpt(raw))),
    }
}

/// Exact key first, then a case-insensitive match.
fn lookup<'a>(map: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    map.get(key)
        .or_else(|| map.iter().find(|(k, _)| k.eq_ignore_ascii_case(key)).map(|(_, v)| v))
}

/// Reads an integer score. Integral floats and numeric strings are
/// accepted; fractional values are rejected, never rounded.
fn read_score(key: &str, value: &Value) -> Result<i64, ParseError> {
    let non_int = || ParseError::NonIntegerScore { key: key.to_string() };
    let n = match value {
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i,
            (None, Some(f)) if f.fract() == 0.0 && f.abs() < 1e15 => f as i64,
            _ => return Err(non_int()),
        },
        Value::String(s) => s.trim().parse::<i64>().map_err(|_| non_int())?,
        _ => return Err(non_int()),
    };
    if !(0..=i64::from(MAX_SCORE)).contains(&n) {
        return Err(ParseError::ScoreOutOfRange {
            key: key.to_string(),
            value: n,
        });
    }
    Ok(n)
}

/// Reads the first `k` ordinal thought/score pairs, in ordinal order.
/// Extra thoughts beyond `k` are ignored.
pub fn parse_thoughts(raw: &str, k: usize) -> Result<Vec<ScoredThought>, ParseError> {
    if k > MAX_WIDTH {
        return Err(ParseError::TooWide(k));
    }
    let map = extract_object(raw)?;
    (0..k)
        .map(|n| {
            let (text_key, score_key) = thought_keys(n);
            let text = match lookup(&map, &text_key) {
                None => return Err(ParseError::MissingKey(text_key)),
                Some(Value::String(s)) if !s.trim().is_empty() => s.trim().to_string(),
                Some(_) => return Err(ParseError::InvalidThought { key: text_key }),
            };
            let score = lookup(&map, &score_key).ok_or_else(|| ParseError::MissingKey(score_key.clone()))?;
            let score = read_score(&score_key, score)?;
            Ok(ScoredThought::new(text, score).expect("text and score already checked"))
        })
        .collect()
}

/// Reads the single compatibility score. A response without the score
/// field counts as malformed.
pub fn parse_confidence(raw: &str) -> Result<u8, ParseError> {
    let map = extract_object(raw)?;
    let value = lookup(&map, CONFIDENCE_KEY).ok_or_else(|| ParseError::MalformedJson(excerpt(raw)))?;
    read_score(CONFIDENCE_KEY, value).map(|s| s as u8)
}

/// Renders thoughts in the response schema. The inverse of
/// [`parse_thoughts`] for well-formed payloads.
pub fn render_thoughts(thoughts: &[ScoredThought]) -> String {
    let mut map = Map::new();
    for (n, t) in thoughts.iter().enumerate() {
        let (text_key, score_key) = thought_keys(n);
        map.insert(text_key, Value::String(t.text().to_string()));
        map.insert(score_key, Value::from(t.score()));
    }
    Value::Object(map).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DOPE: &str = r#"{"Your_First_Thought":"drug reference","Your_First_Thought_Score":8,"Your_Second_Thought":"compliment","Your_Second_Thought_Score":5,"Your_Third_Thought":"insult","Your_Third_Thought_Score":2}"#;

    fn pairs(v: &[ScoredThought]) -> Vec<(&str, u8)> {
        v.iter().map(|t| (t.text(), t.score())).collect()
    }

    #[test]
    fn schema_payload() {
        let t = parse_thoughts(DOPE, 3).unwrap();
        assert_eq!(pairs(&t), vec![("drug reference", 8), ("compliment", 5), ("insult", 2)]);
        assert_eq!(pairs(&parse_thoughts(DOPE, 1).unwrap()), vec![("drug reference", 8)]);
    }

    #[test]
    fn score_out_of_range() {
        let raw = DOPE.replace("\"Your_First_Thought_Score\":8", "\"Your_First_Thought_Score\":11");
        assert_eq!(
            parse_thoughts(&raw, 3),
            Err(ParseError::ScoreOutOfRange {
                key: "Your_First_Thought_Score".into(),
                value: 11
            })
        );
    }

    #[test]
    fn prose_is_malformed() {
        assert!(matches!(
            parse_thoughts("I think it means...", 3),
            Err(ParseError::MalformedJson(_))
        ));
        assert!(matches!(
            parse_thoughts("{ not json }", 3),
            Err(ParseError::MalformedJson(_))
        ));
    }

    #[test]
    fn missing_and_invalid_keys() {
        assert_eq!(
            parse_thoughts(DOPE, 4),
            Err(ParseError::MissingKey("Your_Fourth_Thought".into()))
        );
        assert_eq!(
            parse_thoughts(r#"{"Your_First_Thought":"x"}"#, 1),
            Err(ParseError::MissingKey("Your_First_Thought_Score".into()))
        );
        assert_eq!(
            parse_thoughts(r#"{"Your_First_Thought":"  ","Your_First_Thought_Score":1}"#, 1),
            Err(ParseError::InvalidThought {
                key: "Your_First_Thought".into()
            })
        );
        assert_eq!(parse_thoughts(DOPE, 11), Err(ParseError::TooWide(11)));
    }

    #[test]
    fn fractional_scores_rejected_integral_accepted() {
        let frac = r#"{"Your_First_Thought":"x","Your_First_Thought_Score":7.5}"#;
        assert!(matches!(
            parse_thoughts(frac, 1),
            Err(ParseError::NonIntegerScore { .. })
        ));
        let whole = r#"{"Your_First_Thought":"x","Your_First_Thought_Score":7.0}"#;
        assert_eq!(parse_thoughts(whole, 1).unwrap()[0].score(), 7);
        let text = r#"{"Your_First_Thought":"x","Your_First_Thought_Score":" 9 "}"#;
        assert_eq!(parse_thoughts(text, 1).unwrap()[0].score(), 9);
    }

    #[test]
    fn fenced_and_commaless_output() {
        let raw = "Sure! Here you go:\n```json\n{\n  \"Your_First_Thought\": \"slang for cool {really}\"\n  \"Your_First_Thought_Score\": 9\n  \"Your_Second_Thought\": \"drugs\"\n  \"Your_Second_Thought_Score\": 4\n}\n```\nHope that helps.";
        let t = parse_thoughts(raw, 2).unwrap();
        assert_eq!(pairs(&t), vec![("slang for cool {really}", 9), ("drugs", 4)]);
        let lower = r#"{"your_first_thought":"x","your_first_thought_score":3}"#;
        assert_eq!(parse_thoughts(lower, 1).unwrap()[0].score(), 3);
    }

    #[test]
    fn confidence() {
        assert_eq!(parse_confidence(r#"{"Your_Confidence_Score": 7}"#), Ok(7));
        assert_eq!(parse_confidence("```\n{\"Your_Confidence_Score\": 0}\n```"), Ok(0));
        assert_eq!(
            parse_confidence(r#"{"Your_Confidence_Score": -1}"#),
            Err(ParseError::ScoreOutOfRange {
                key: CONFIDENCE_KEY.into(),
                value: -1
            })
        );
        assert!(matches!(parse_confidence("{}"), Err(ParseError::MalformedJson(_))));
    }

    proptest! {
        #[test]
        fn render_parse_lossless(
            items in proptest::collection::vec(("[ -~]{0,20}[a-zA-Z][ -~]{0,20}", 0i64..=10), 1..=MAX_WIDTH)
        ) {
            let thoughts: Vec<ScoredThought> = items
                .iter()
                .map(|(t, s)| ScoredThought::new(t.trim(), *s).unwrap())
                .collect();
            let raw = render_thoughts(&thoughts);
            prop_assert_eq!(parse_thoughts(&raw, thoughts.len()).unwrap(), thoughts);
        }
    }
}
