//! Research toolkit for detecting, manipulating, and characterizing
//! pre-committed answers in chain-of-thought language models.
//!
//! The crate is organized around the stages of the experiment pipeline:
//!
//! - [`corpus`] — binary yes/no task loading, splitting, and prompt rendering
//!   with few-shot demonstrations and randomized option order.
//! - [`backend`] — a uniform interface to a causal LM exposing sampling,
//!   residual-stream capture at the pre-CoT token, and additive steering
//!   during decoding. Includes a synthetic planted-direction backend for
//!   model-free testing and an HTTP adapter for real models.
//! - [`parsing`] — extraction of the final (A)/(B) choice from generations.
//! - [`probe`] — per-layer difference-of-means probes, cosine scoring,
//!   rank-based AUC, layer selection, and the probe logit lens.
//! - [`steering`] — steering sweeps over correct-answer subsets, flip rates,
//!   the orthogonal norm-matched baseline, and Wilson intervals.
//! - [`sensitivity`] — CoT interventions (ellipses removal, incorrect-CoT
//!   substitution) and answer-change rates.
//! - [`judge`] — LLM-as-judge trace classification into the
//!   sound / non-entailment / confabulation / hallucination framework,
//!   sampling rules, and consistency audits.
//! - [`report`] — run persistence, accuracy tables, flip-rate curves,
//!   moving-average classification series, and CSV/SVG emission.
//!
//! [`pipeline`] wires the stages together behind the declarative [`config`]
//! document; the `precot` binary is a thin CLI over it.

pub mod activation_cache;
pub mod backend;
pub mod config;
pub mod corpus;
pub mod judge;
pub mod linalg;
pub mod llm_client;
pub mod parsing;
pub mod pipeline;
pub mod probe;
pub mod records;
pub mod report;
pub mod seeding;
pub mod sensitivity;
pub mod steering;
pub mod types;

pub use types::{AnswerLetter, AnswerOutcome, PromptMode, Semantic, TaskName};
