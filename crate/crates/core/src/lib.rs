//! Quantitative probing for causal model validation.
//!
//! A causal analysis is trusted more when, besides the target effect, it
//! also reproduces a set of non-target effects whose values are known in
//! advance. This crate provides the pieces to run and to study that check
//! over binary data:
//!
//! * [`graph`]: DAGs, random generation, reachability, structural Hamming distance.
//! * [`bayesnet`]: binary causal Bayesian networks with exact interventional inference.
//! * [`dataset`]: CSV ingestion and preprocessing.
//! * [`discovery`]: greedy equivalence search with BIC and edge knowledge.
//! * [`estimation`]: average treatment effect estimators.
//! * [`probing`]: probe expectations, hit rates and validation reports.
//! * [`pipeline`]: the end-to-end analysis.
//! * [`sim`]: the seeded Monte-Carlo study harness.
//! * [`plot`]: SVG rendering of study results.

pub mod bayesnet;
pub mod dataset;
pub mod discovery;
pub mod error;
pub mod estimation;
pub mod graph;
pub mod io;
pub mod pipeline;
pub mod plot;
pub mod probing;
pub mod sim;
pub mod sprinkler;

pub use error::{Error, Result};
