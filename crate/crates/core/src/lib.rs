//! Dependency-based neural reordering for phrase-based translation.
//!
//! The pipeline: read dependency-parsed, word-aligned parallel text ([`corpus`]), extract
//! head-child and sibling reordering instances ([`extract`]), train word embeddings on
//! dependency contexts ([`embed`]), train feed-forward swap classifiers ([`nn`]), and use
//! them as feature functions in a beam-search decoder ([`decoder`]). [`bleu`] scores output.

pub mod bleu;
pub mod corpus;
pub mod decoder;
pub mod embed;
pub mod error;
pub mod extract;
pub mod nn;

pub use error::{Error, Result};
