//! Slang interpretation with a greedy search-guided chain of prompts.
//!
//! A record (word, ground-truth meaning, usage example) goes through three
//! prompted stages: candidate categories, candidate meanings for the best
//! category, and a compatibility check of each meaning against the usage
//! example. The answer is the meaning with the best weighted score. The
//! [`harness`] scores answers with ROUGE-L and embedding cosine similarity and
//! compares the chain against a single-prompt baseline.
//!
//! All model traffic goes through [`gateway::Gateway`], which has HTTP
//! backends for chat-completion and embedding endpoints and scripted
//! backends for offline runs.

pub mod chain;
pub mod dataset;
pub mod domain;
pub mod gateway;
pub mod harness;
pub mod metrics;

pub use chain::{Chain, ChainError, PromptSet, Stage};
pub use domain::{
    validate_record, ChainConfig, ChainTrace, CompatScore, EvalScores, ExperimentReport, MeanScores, RecordResult,
    ReportRow, ScoredThought, SlangRecord, Strategy,
};
pub use gateway::{Gateway, GatewayError};
