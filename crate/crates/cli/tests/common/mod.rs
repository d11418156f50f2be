#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;
use slangcot_core::chain::render_thoughts;
use slangcot_core::domain::ScoredThought;

pub struct Fixture {
    pub word: &'static str,
    pub meaning: &'static str,
    pub example: &'static str,
}

pub const FIXTURES: [Fixture; 4] = [
    Fixture {
        word: "dope",
        meaning: "something is pretty cool",
        example: "A: Did you hear the new track?\nB: Yeah, that song is dope!",
    },
    Fixture {
        word: "salty",
        meaning: "bitter or upset about something minor",
        example: "A: He lost one game and quit.\nB: He is so salty.",
    },
    Fixture {
        word: "lit",
        meaning: "exciting and full of energy",
        example: "A: How was the party?\nB: It was lit!",
    },
    Fixture {
        word: "ghost",
        meaning: "to suddenly stop replying to someone",
        example: "A: Did she text back?\nB: No, she ghosted me.",
    },
];

pub fn dataset_jsonl(fixtures: &[Fixture]) -> String {
    fixtures
        .iter()
        .map(|f| json!({"word": f.word, "meaning": f.meaning, "example": f.example}).to_string() + "\n")
        .collect()
}

pub fn thoughts(items: &[(&str, i64)]) -> String {
    let t: Vec<ScoredThought> = items.iter().map(|(s, n)| ScoredThought::new(*s, *n).unwrap()).collect();
    render_thoughts(&t)
}

pub fn confidence(n: u8) -> String {
    format!(r#"{{"Your_Confidence_Score": {n}}}"#)
}

/// Script entries (as JSON values) for one record: one IO reply and a
/// full width-3 chain whose best meaning is `cot_answer`.
pub fn record_script(f: &Fixture, io_answer: &str, cot_answer: &str) -> Vec<serde_json::Value> {
    let ctx = format!("Example usage: {}", f.example);
    let word = format!("Word: {}", f.word);
    let category = format!("{ctx}\n\nPlease explain the following word:\n{word}\n\nBased on");
    let meaning = format!(
        "{ctx}\n\nAnd the most likely inferred category:\nInferred category: slang for {}\n\nBased",
        f.word
    );
    let compat = format!(
        "{ctx}\n\nAnd the most likely inferred category:\nInferred category: slang for {}\n\nAnd",
        f.word
    );
    let io = format!("{ctx}\n\nPlease explain the following word:\n{word}\n\nWhat does");
    let cat_name = format!("slang for {}", f.word);
    vec![
        json!({"contains": io, "response": io_answer}),
        json!({"contains": category, "response": thoughts(&[("literal usage", 4), (&cat_name, 8), ("insult", 2)])}),
        json!({"contains": meaning, "response": thoughts(&[(cot_answer, 7), ("a decoy meaning", 6), ("another decoy", 5)])}),
        json!({"contains": compat, "response": confidence(9)}),
        json!({"contains": compat, "response": confidence(4)}),
        json!({"contains": compat, "response": confidence(3)}),
    ]
}

pub fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

pub fn slangcot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slangcot"))
        .args(args)
        .output()
        .expect("binary runs")
}
