//! Adversarial filtering of dataset instances whose labels are spuriously
//! predictable from their feature representation.
//!
//! The filter ([`filter::run_filter`]) repeatedly trains an ensemble of
//! linear classifiers on random train/test partitions of the working set,
//! scores every instance by how often its label is predicted correctly out
//! of sample, and removes the most predictable instances until no score
//! reaches the early-stopping threshold or a minimum size is hit. The
//! [`exact`] module provides the brute-force optimum this heuristic
//! approximates, for tiny datasets where full enumeration is feasible, and
//! [`synthetic`] generates the concentric-circles-with-planted-bias
//! benchmark used to validate removal quality end to end.

pub mod classifiers;
pub mod dataset;
pub mod error;
pub mod exact;
pub mod filter;
pub mod matrix;
pub mod seeding;
pub mod synthetic;

pub use error::{Error, Result};
