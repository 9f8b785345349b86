//! Retrieval-augmented generation over video corpora.
//!
//! The engine ranks videos against a query with an interpolated text/visual
//! representation, picks informative frames with a trainable subset scorer
//! over a k-means++ reduced candidate set, assembles a multimodal context for
//! an external generator, and scores answers with ROUGE-L and BLEU-4.
//!
//! All pretrained-model inference (encoders, ASR, generator, judge) sits
//! behind the [`client::ModelClient`] wire contract, so everything in this
//! crate runs offline against stubs or recorded fixtures.

pub mod cli;
pub mod client;
pub mod cluster;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod generation;
pub mod metrics;
pub mod nn;
pub mod queries;
pub mod retrieval;
pub mod seed;
pub mod selector;
pub mod synthetic;
pub mod vector;

pub use error::{Error, Result};
