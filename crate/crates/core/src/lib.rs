//! Field-level sensitivity classification for command-line responses.
//!
//! Responses are flattened into six-feature field records, tokenized,
//! vectorized with one of five text transforms and scored by a trained
//! classifier. Fields scoring at or above the model threshold are redacted.

pub mod embeddings;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod redactor;
pub mod schema;
pub mod tokenizer;
pub mod transforms;
