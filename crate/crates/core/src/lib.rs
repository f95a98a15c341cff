//! Diversity-aware batch active learning for dependency parsing.
//!
//! The crate is organised bottom-up:
//!
//! - [`treebank`]: CoNLL-U ingestion, corpus duplication and annotation pool state.
//! - [`parser`]: a hashed log-linear, edge-factored parser with per-modifier
//!   attachment distributions, Chu-Liu-Edmonds decoding and a relation labeler.
//! - [`structured`]: partition function and arc marginals over arborescences
//!   via the matrix-tree theorem, plus an enumeration oracle.
//! - [`quality`]: AMP, BALD, information density and random quality scores.
//! - [`diversity`]: averaged projected features, tf-idf subgraph counts and
//!   intra-batch distance metrics.
//! - [`dpp`]: L-ensemble kernels and greedy MAP selection under a size budget.
//! - [`alsim`]: the round-based active-learning simulator and its outputs.

pub mod alsim;
pub mod diversity;
pub mod dpp;
mod error;
mod linalg;
pub mod parser;
pub mod quality;
pub mod seed;
pub mod structured;
pub mod synthetic;
pub mod tree;
pub mod treebank;

pub use error::{Error, Result};
