//! Discourse-structure similarity between documents using Questions Under
//! Discussion (QUDs).
//!
//! The crate is organised by pipeline stage:
//!
//! * [`corpus`] holds the data model (documents, segmentations, QUDs, answer
//!   sets, gold alignments), the sentence splitter and the on-disk layout.
//! * [`llm`] renders prompt templates and talks to chat/embedding backends
//!   through a content-addressed response cache.
//! * [`pipeline`] runs the four LLM-backed stages: segmentation, entity
//!   abstraction, QUD generation and QUD answering.
//! * [`scoring`] computes directional answerability and the bidirectional
//!   QUDsim score for every segment pair.
//! * [`baselines`] implements n-gram Jaccard, ROUGE-L, embedding cosine and
//!   LLM-judge segment similarity.
//! * [`alignment`] thresholds matrices, calibrates thresholds, aggregates
//!   document-level similarity and mines discourse templates.
//! * [`eval`] scores alignments against gold labels and measures answer
//!   agreement, abstraction statistics and stability.
//! * [`report`] renders heatmaps and alignment diagrams.

pub mod alignment;
pub mod baselines;
pub mod config;
pub mod corpus;
mod error;
pub mod eval;
pub mod llm;
pub mod pipeline;
pub mod report;
pub mod scoring;
pub mod workflow;

pub use error::{Error, Result};
