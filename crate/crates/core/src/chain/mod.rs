//! The three-stage greedy chain and the single-prompt baseline.
//!
//! Stage 1 asks for `width` candidate categories and keeps the best one.
//! Stage 2 asks for `width` candidate meanings given that category and keeps
//! all of them. Stage 3 asks for a compatibility score for every meaning and
//! picks the best weighted combination of compatibility and the stage-2
//! score.

mod parse;
mod select;
mod template;

use std::io::{self, Write};

use thiserror::Error;

use crate::domain::{
    ChainConfig, ChainTrace, CompatScore, ConfigError, Exchange, ScoredThought, SlangRecord, Strategy,
};
use crate::gateway::{ChatRequest, Gateway, GatewayError};

pub use parse::{
    extract_object, parse_confidence, parse_thoughts, render_thoughts, thought_keys, ParseError, CONFIDENCE_KEY,
};
pub use select::{greedy_pick, select_meaning, weighted_score, Selection};
pub use template::{Bindings, PromptSet, PromptTemplate, Stage, TemplateError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("{stage} stage: {source}")]
    Gateway {
        stage: Stage,
        #[source]
        source: GatewayError,
    },
    #[error("{stage} stage: unusable response after {attempts} attempts: {source}")]
    Parse {
        stage: Stage,
        attempts: u32,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no candidates to choose from")]
    EmptyCandidates,
    #[error("{meanings} meanings but {scores} compatibility scores")]
    LengthMismatch { meanings: usize, scores: usize },
    #[error("model returned an empty response")]
    EmptyResponse,
    #[error("config strategy is {found}, expected {expected}")]
    WrongStrategy { expected: Strategy, found: Strategy },
}

/// Runs prompts for one configuration against one gateway.
pub struct Chain<'a> {
    gateway: &'a Gateway,
    prompts: &'a PromptSet,
    config: &'a ChainConfig,
}

impl<'a> Chain<'a> {
    pub fn new(gateway: &'a Gateway, prompts: &'a PromptSet, config: &'a ChainConfig) -> Self {
        Self {
            gateway,
            prompts,
            config,
        }
    }

    pub fn config(&self) -> &ChainConfig {
        self.config
    }

    fn request(&self, stage: Stage, bindings: &Bindings<'_>) -> Result<ChatRequest, ChainError> {
        let (system_prompt, user_prompt) = self.prompts.get(stage).render(bindings)?;
        Ok(ChatRequest {
            model_id: self.config.model_id.clone(),
            system_prompt,
            user_prompt,
            temperature: self.config.temperature,
        })
    }

    /// Sends the stage prompt and parses the reply, re-asking the same
    /// prompt on unusable output up to `max_retries` more times. Every
    /// exchange is appended to `trace`.
    pub(crate) fn ask<T>(
        &self,
        stage: Stage,
        bindings: &Bindings<'_>,
        trace: &mut Vec<Exchange>,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<T, ChainError> {
        let request = self.request(stage, bindings)?;
        let attempts = self.config.max_retries + 1;
        let mut last = None;
        for attempt in 1..=attempts {
            let response = self
                .gateway
                .chat(&request)
                .map_err(|source| ChainError::Gateway { stage, source })?;
            trace.push(Exchange {
                prompt: request.user_prompt.clone(),
                response: response.content.clone(),
            });
            match parse(&response.content) {
                Ok(v) => return Ok(v),
                Err(e) => {
                    log::debug!("{stage} stage attempt {attempt}/{attempts}: {e}");
                    last = Some(e);
                }
            }
        }
        Err(ChainError::Parse {
            stage,
            attempts,
            source: last.expect("at least one attempt"),
        })
    }

    fn base_bindings(record: &SlangRecord) -> Bindings<'static> {
        let mut b = Bindings::new();
        b.insert("original_context", record.usage_example().to_string());
        b.insert("slang_word", record.word().to_string());
        b
    }

    /// Stage 1. Returns all parsed candidates and the index of the first
    /// one holding the top score.
    pub fn infer_category(
        &self,
        record: &SlangRecord,
        exchanges: &mut Vec<Exchange>,
    ) -> Result<(Vec<ScoredThought>, usize), ChainError> {
        let mut b = Self::base_bindings(record);
        b.insert("width", self.config.width.to_string());
        let width = self.config.width;
        let thoughts = self.ask(Stage::Category, &b, exchanges, |raw| parse_thoughts(raw, width))?;
        let best = greedy_pick(&thoughts).ok_or(ChainError::EmptyCandidates)?;
        Ok((thoughts, best))
    }

    /// Stage 2. The full candidate list, unfiltered and in model order.
    pub fn generate_meanings(
        &self,
        record: &SlangRecord,
        category: &ScoredThought,
        exchanges: &mut Vec<Exchange>,
    ) -> Result<Vec<ScoredThought>, ChainError> {
        let mut b = Self::base_bindings(record);
        b.insert("inferred_category", category.text().to_string());
        b.insert("width", self.config.width.to_string());
        let width = self.config.width;
        let meanings = self.ask(Stage::Meaning, &b, exchanges, |raw| parse_thoughts(raw, width))?;
        if meanings.is_empty() {
            return Err(ChainError::EmptyCandidates);
        }
        Ok(meanings)
    }

    /// Stage 3 for one meaning.
    pub fn check_compatibility(
        &self,
        record: &SlangRecord,
        meaning: &ScoredThought,
        category: &ScoredThought,
        exchanges: &mut Vec<Exchange>,
    ) -> Result<u8, ChainError> {
        let mut b = Self::base_bindings(record);
        b.insert("inferred_category", category.text().to_string());
        b.insert("inferred_meaning", meaning.text().to_string());
        self.ask(Stage::Compatibility, &b, exchanges, parse_confidence)
    }

    pub fn select_meaning(&self, meanings: &[ScoredThought], compat: &[u8]) -> Result<Selection, ChainError> {
        select_meaning(meanings, compat, self.config.weight_compat, self.config.weight_prior)
    }

    fn try_chain(&self, record: &SlangRecord, trace: &mut ChainTrace) -> Result<(), ChainError> {
        self.config.validate()?;
        if self.config.strategy != Strategy::GreedyCot {
            return Err(ChainError::WrongStrategy {
                expected: Strategy::GreedyCot,
                found: self.config.strategy,
            });
        }
        let (categories, best) = self.infer_category(record, &mut trace.raw_exchanges)?;
        let category = categories[best].clone();
        trace.category_candidates = categories;
        trace.selected_category = Some(category.clone());

        let meanings = self.generate_meanings(record, &category, &mut trace.raw_exchanges)?;
        trace.meaning_candidates = meanings.clone();

        let mut compat = Vec::with_capacity(meanings.len());
        for meaning in &meanings {
            compat.push(self.check_compatibility(record, meaning, &category, &mut trace.raw_exchanges)?);
        }
        let selection = self.select_meaning(&meanings, &compat)?;
        trace.compat_scores = compat
            .iter()
            .zip(&selection.finals)
            .enumerate()
            .map(|(meaning_index, (confidence, final_score))| CompatScore {
                meaning_index,
                confidence: *confidence,
                final_score: *final_score,
            })
            .collect();
        trace.final_meaning = selection.text;
        trace.final_score = Some(selection.final_score);
        Ok(())
    }

    /// Runs the greedy chain. Failures are recorded in the returned trace
    /// rather than returned, so a batch can carry on.
    pub fn run_chain(&self, record: &SlangRecord) -> ChainTrace {
        let mut trace = ChainTrace::new(record, Strategy::GreedyCot);
        if let Err(e) = self.try_chain(record, &mut trace) {
            trace.final_meaning.clear();
            trace.final_score = None;
            trace.error = Some(e.to_string());
        }
        trace
    }

    fn try_io(&self, record: &SlangRecord, trace: &mut ChainTrace) -> Result<(), ChainError> {
        self.config.validate()?;
        if self.config.strategy != Strategy::Io {
            return Err(ChainError::WrongStrategy {
                expected: Strategy::Io,
                found: self.config.strategy,
            });
        }
        let request = self.request(Stage::IoBaseline, &Self::base_bindings(record))?;
        let response = self.gateway.chat(&request).map_err(|source| ChainError::Gateway {
            stage: Stage::IoBaseline,
            source,
        })?;
        trace.raw_exchanges.push(Exchange {
            prompt: request.user_prompt,
            response: response.content.clone(),
        });
        let answer = response.content.trim();
        if answer.is_empty() {
            return Err(ChainError::EmptyResponse);
        }
        trace.final_meaning = answer.to_string();
        Ok(())
    }

    /// One direct question; the trimmed reply is the answer.
    pub fn run_io_baseline(&self, record: &SlangRecord) -> ChainTrace {
        let mut trace = ChainTrace::new(record, Strategy::Io);
        if let Err(e) = self.try_io(record, &mut trace) {
            trace.final_meaning.clear();
            trace.error = Some(e.to_string());
        }
        trace
    }

    /// Dispatches on the configured strategy.
    pub fn run(&self, record: &SlangRecord) -> ChainTrace {
        match self.config.strategy {
            Strategy::Io => self.run_io_baseline(record),
            Strategy::GreedyCot => self.run_chain(record),
        }
    }
}

/// Writes one JSON object per trace, newline-terminated.
pub fn write_traces<W: Write>(mut out: W, traces: &[ChainTrace]) -> io::Result<()> {
    for t in traces {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
