//! Active-learning experiment engine.
//!
//! Selection strategies (random, least-confidence, margin, density-weighted
//! and explanation-divergence) run inside a seeded bootstrapping loop over
//! IDX image benchmarks. See the crate README for the command-line tool.

pub mod data;
pub mod model;
pub mod explainer;
pub mod strategies;
pub mod harness;
pub mod output;
pub mod cli;
