//! Task-guided pair embedding over heterogeneous academic networks.
//!
//! The crate covers the full pipeline: typed-graph ingestion and a
//! synthetic corpus generator, meta-path guided random walks with
//! paper-author pair extraction, the pair/context-path model with a
//! validity classifier, a heterogeneous skip-gram baseline, training,
//! and a ranking evaluation harness for author identification.

pub mod cli;
pub mod error;
pub mod eval;
pub mod harness;
pub mod hetgraph;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod par;
pub mod seeds;
pub mod walker;

pub use error::{Result, TapemError};
