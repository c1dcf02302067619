//! Library surface of the command-line driver: configuration, embeddings
//! I/O, the evaluation harness, and pipeline orchestration.

pub mod config;
pub mod eval;
pub mod experiment;
pub mod io;
