//! Desk-scale workbench for a two-stage scientific question-answering
//! pipeline: embedding retrieval over abstract chunks, an agentic LLM
//! reranker that filters semantically-similar-but-logically-irrelevant
//! passages, synthetic dataset construction with hard distractors, and a
//! metrics suite with per-run variance.

pub mod config;
pub mod corpus;
pub mod embed;
pub mod eval;
pub mod forge;
pub mod gateway;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod text;
