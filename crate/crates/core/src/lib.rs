//! Evolves clause-structured boolean search queries against an n-gram
//! indexed, bit-packed document corpus.
//!
//! The pieces, bottom up:
//!
//! - [`corpus`]: tokenizer, n-gram vocabulary, per-document bit vectors.
//! - [`query`]: clause queries, the integer genome, parsing, normal form.
//! - [`eval`]: matching, confusion counts, the loss.
//! - [`ga`]: genetic operators, selection, run state, checkpoints.
//! - [`provider`]: token-budgeted remote search, simulated or real.
//! - [`synthetic`]: generated corpora with a planted target query.
//! - [`orchestrator`]: configuration and the run loop with its control queue.

pub mod corpus;
pub mod eval;
pub mod query;
pub mod ga;
pub mod provider;
pub mod synthetic;
pub mod orchestrator;
