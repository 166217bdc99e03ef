//! Certified acceptance gate for self-modifying configuration loops.
//!
//! A stream of proposed configuration edits is evaluated against the current
//! incumbent on paired seeds; an edit is committed only when a statistical
//! test certifies improvement, and a global error budget bounds the chance of
//! ever committing a harmful edit.
//!
//! The numeric kernels ([`certify`], [`budget`], [`harness::rastrigin`]) are
//! generic over the scalar type; the orchestration layer runs in `f64`. The
//! aliases below name the `f64` instantiations used throughout the gate.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod budget;
pub mod canonical;
pub mod certify;
pub mod cmaes;
pub mod config;
pub mod gate;
pub mod harness;
pub mod propose;
pub mod scalar;

pub use budget::{BudgetEvent, ScheduleKind};
pub use certify::{Decision, LambdaPolicy, LambdaRule, TestMode};
pub use config::{Configuration, ParamValue};
pub use gate::{run_outer_loop, GateConfig, GateError, GateOutcome, GateState, Registry, RegistryEntry};
pub use harness::{Harness, Stage};
pub use scalar::{Real, Scalar};

pub type PairedDeltas = certify::PairedDeltas<f64>;
pub type NormalizedDeltas = certify::NormalizedDeltas<f64>;
pub type WealthState = certify::WealthState<f64>;
pub type Certificate = certify::Certificate<f64>;
pub type BudgetState = budget::BudgetState<f64>;
pub type LedgerEntry = budget::LedgerEntry<f64>;

/// Budget state in exact rational arithmetic.
pub type ExactBudgetState = budget::BudgetState<num_rational::BigRational>;
