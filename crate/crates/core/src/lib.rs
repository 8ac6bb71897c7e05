//! Stress detection over social-media posts: corpus handling, text
//! preprocessing, word-embedding features, five classifiers, evaluation,
//! and a file-backed log that streams posts through a saved model.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod models;
pub mod mqlog;
pub mod orchestrator;
pub mod stream;
pub mod textprep;
pub mod util;

pub use error::{Error, Result};
