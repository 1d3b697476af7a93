//! Corpus-enrichment engine for findings/impression report corpora:
//! sentence clustering over unit-normalized embeddings, sign-labeled
//! cluster compatibility graphs built from co-occurrence, exhaustive
//! largest-valid-enrichment enumeration per unique finding set, and a
//! cluster-overlap reward for generated reports.

pub mod clustering;
pub mod corpus;
pub mod embedding;
pub mod enrichment;
pub mod graph;
mod ids;
pub mod reward;
pub mod signing;

pub use ids::{ClusterId, SentenceId};
