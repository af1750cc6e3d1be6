//! Two-layer retrieval-augmented summarization over large social-media dumps.
//!
//! The crate is organized around the stages of the pipeline:
//!
//! - [`corpus`] — parse, filter, and persist newline-delimited JSON post
//!   dumps into a normalized corpus store.
//! - [`index`] — inverted index with Okapi BM25F ranking and time-range
//!   restricted search over the corpus.
//! - [`llm`] — a uniform generation interface over an HTTP chat-completions
//!   backend and a deterministic offline mock.
//! - [`pipeline`] — retrieve, segment, summarize each segment (layer 1), drop
//!   no-answer segments, and aggregate into one final answer (layer 2), with
//!   full provenance.
//! - [`evalstats`] — Likert-record ingestion, median/IQR descriptives,
//!   Coleman-Liau readability, token counts, and Mann-Whitney U tests.

pub mod corpus;
pub mod evalstats;
pub mod index;
pub mod llm;
pub mod pipeline;
pub mod text;

pub use corpus::{CorpusFilter, CorpusStats, CorpusStore, Post, TimeRange};
pub use index::{build_index, FieldConfig, Index, RetrievalResult};
pub use llm::{GenerationRequest, GenerationResponse, Generator};
pub use pipeline::{answer_query, AnswerBundle, PipelineConfig, PromptTemplate, PromptTemplates};
