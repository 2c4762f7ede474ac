//! Resampling-based auditing of false non-match rates (FNMR) across
//! demographic groups.
//!
//! A false non-match is a genuine comparison that a matcher wrongly rejects.
//! Decisions on the same subject are correlated, so naive binomial inference
//! understates uncertainty; every method here works at the subject level.
//!
//! The crate provides:
//! - a decision-level data model with CSV/JSON ingestion ([`data`]),
//! - FNMR, intra-class correlation and variance estimators ([`estimators`]),
//! - an omnibus bootstrap F-test of equal group FNMRs ([`ftest`]),
//! - a margin-of-error interval that flags outlying groups ([`moe`]),
//! - a correlated-decision generator and simulation grid runner ([`sim`]).
//!
//! All randomized procedures draw from counter-derived RNG streams ([`rng`]),
//! so results are bit-identical for a given seed regardless of thread count
//! or evaluation order.

pub mod data;
pub mod error;
pub mod estimators;
pub mod ftest;
pub mod moe;
pub mod rng;
pub mod sim;
pub mod stats;

pub use data::{CsvSchema, DecisionRecord, GroupDataset, StudyDataset, SubjectDecisions};
pub use error::AuditError;
pub use estimators::{estimate_group, GroupEstimates};
pub use ftest::{bootstrap_f_test, BootstrapConfig, FTestResult};
pub use moe::{margin_of_error, MoeResult};
pub use sim::{run_cell, run_grid, GridSpec, SimCellResult, SimConfig};

/// Default number of bootstrap replicates.
pub const DEFAULT_REPLICATES: usize = 999;

/// Default significance level.
pub const DEFAULT_ALPHA: f64 = 0.05;
