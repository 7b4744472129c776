//! Evaluation framework for part-level explanations of prototype-based
//! classifiers on a synthetic, fully annotated benchmark.

pub mod attribution;
pub mod error;
pub mod grid;
pub mod harness;
pub mod interface;
pub mod metrics;
pub mod protonet;
pub mod scenegen;
pub mod seeds;

pub use error::{Error, Result};
