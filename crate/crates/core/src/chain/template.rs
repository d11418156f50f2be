//! Prompt templates with named `{placeholder}` slots.
//!
//! Template files have two sections, introduced by `[system]` and `[user]`
//! on lines of their own. In the user text `{name}` is a slot when `name` is
//! an identifier, `{{` and `}}` are literal braces, and any other brace is
//! copied through unchanged.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("placeholder `{{{0}}}` has no binding")]
    UnboundPlaceholder(String),
    #[error("placeholder `{{{name}}}` is not defined for the {stage} stage")]
    UnknownPlaceholder { stage: Stage, name: String },
    #[error("template for the {0} stage needs `[system]` and `[user]` sections")]
    MissingSection(Stage),
    #[error("cannot read template {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Category,
    Meaning,
    Compatibility,
    IoBaseline,
    Rephrase,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Category,
        Stage::Meaning,
        Stage::Compatibility,
        Stage::IoBaseline,
        Stage::Rephrase,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Category => "category",
            Stage::Meaning => "meaning",
            Stage::Compatibility => "compatibility",
            Stage::IoBaseline => "io_baseline",
            Stage::Rephrase => "rephrase",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.txt", self.as_str())
    }

    /// Placeholders a template for this stage may reference.
    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            Stage::Category => &["original_context", "slang_word", "width"],
            Stage::Meaning => &["original_context", "slang_word", "inferred_category", "width"],
            Stage::Compatibility => &[
                "original_context",
                "slang_word",
                "inferred_category",
                "inferred_meaning",
            ],
            Stage::IoBaseline => &["original_context", "slang_word"],
            Stage::Rephrase => &["original_context", "slang_word", "original_meaning"],
        }
    }

    fn default_source(self) -> &'static str {
        match self {
            Stage::Category => include_str!("../../templates/category.txt"),
            Stage::Meaning => include_str!("../../templates/meaning.txt"),
            Stage::Compatibility => include_str!("../../templates/compatibility.txt"),
            Stage::IoBaseline => include_str!("../../templates/io_baseline.txt"),
            Stage::Rephrase => include_str!("../../templates/rephrase.txt"),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub type Bindings<'a> = BTreeMap<&'a str, String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    stage: Stage,
    system_text: String,
    user_text_pattern: String,
}

enum Piece<'a> {
    Text(&'a str),
    Brace(char),
    Slot(&'a str),
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Splits a pattern into literal text, escaped braces and slots.
fn pieces(pattern: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let bytes = pattern.as_bytes();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if (b == b'{' || b == b'}') && bytes.get(i + 1) == Some(&b) {
            out.push(Piece::Text(&pattern[start..i]));
            out.push(Piece::Brace(b as char));
            i += 2;
            start = i;
            continue;
        }
        if b == b'{' {
            if let Some(len) = pattern[i + 1..].find('}') {
                let name = &pattern[i + 1..i + 1 + len];
                if is_identifier(name) {
                    out.push(Piece::Text(&pattern[start..i]));
                    out.push(Piece::Slot(name));
                    i += len + 2;
                    start = i;
                    continue;
                }
            }
        }
        i += 1;
    }
    out.push(Piece::Text(&pattern[start..]));
    out
}

impl PromptTemplate {
    pub fn new(
        stage: Stage,
        system_text: impl Into<String>,
        user_text_pattern: impl Into<String>,
    ) -> Result<Self, TemplateError> {
        let t = Self {
            stage,
            system_text: system_text.into(),
            user_text_pattern: user_text_pattern.into(),
        };
        let allowed = stage.placeholders();
        if let Some(bad) = t.placeholders().into_iter().find(|p| !allowed.contains(&p.as_str())) {
            return Err(TemplateError::UnknownPlaceholder { stage, name: bad });
        }
        Ok(t)
    }

    /// Parses the `[system]` / `[user]` file form.
    pub fn parse(stage: Stage, source: &str) -> Result<Self, TemplateError> {
        let source = source.replace("\r\n", "\n");
        let sys_at = source.find("[system]\n").ok_or(TemplateError::MissingSection(stage))?;
        let user_at = source.find("\n[user]\n").ok_or(TemplateError::MissingSection(stage))?;
        if user_at < sys_at {
            return Err(TemplateError::MissingSection(stage));
        }
        let system = source[sys_at + "[system]\n".len()..user_at].trim();
        let user = source[user_at + "\n[user]\n".len()..].trim_end();
        Self::new(stage, system, user)
    }

    pub fn default_for(stage: Stage) -> Self {
        Self::parse(stage, stage.default_source()).expect("built-in template is valid")
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn system_text(&self) -> &str {
        &self.system_text
    }

    pub fn user_text_pattern(&self) -> &str {
        &self.user_text_pattern
    }

    /// Slot names referenced by the user pattern.
    pub fn placeholders(&self) -> BTreeSet<String> {
        pieces(&self.user_text_pattern)
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(name) => Some(name.to_string()),
                _ => None,
            })
            .collect()
    }

    /// Substitutes bindings into the user pattern. Returns (system, user).
    pub fn render(&self, bindings: &Bindings<'_>) -> Result<(String, String), TemplateError> {
        let mut user = String::with_capacity(self.user_text_pattern.len() + 256);
        for piece in pieces(&self.user_text_pattern) {
            match piece {
                Piece::Text(t) => user.push_str(t),
                Piece::Brace(c) => user.push(c),
                Piece::Slot(name) => match bindings.get(name) {
                    Some(v) => user.push_str(v),
                    None => return Err(TemplateError::UnboundPlaceholder(name.to_string())),
                },
            }
        }
        Ok((self.system_text.clone(), user))
    }

    pub fn source_text(&self) -> String {
        format!("[system]\n{}\n[user]\n{}\n", self.system_text, self.user_text_pattern)
    }

    /// Hex SHA-256 of the file form, for run manifests.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.source_text().as_bytes()))
    }
}

/// One template per stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    templates: BTreeMap<Stage, PromptTemplate>,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            templates: Stage::ALL
                .iter()
                .map(|s| (*s, PromptTemplate::default_for(*s)))
                .collect(),
        }
    }
}

impl PromptSet {
    /// Defaults, overridden by any `<stage>.txt` present in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::default();
        for stage in Stage::ALL {
            let path = dir.join(stage.file_name());
            if !path.exists() {
                continue;
            }
            let source = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
            set.templates.insert(stage, PromptTemplate::parse(stage, &source)?);
        }
        Ok(set)
    }

    pub fn get(&self, stage: Stage) -> &PromptTemplate {
        &self.templates[&stage]
    }

    pub fn set(&mut self, template: PromptTemplate) {
        self.templates.insert(template.stage(), template);
    }

    pub fn hashes(&self) -> BTreeMap<String, String> {
        self.templates
            .iter()
            .map(|(s, t)| (s.as_str().to_string(), t.content_hash()))
            .collect()
    }
}
