//! Exact finite-distribution toolkit for testing conditional-independence
//! implication claims.
//!
//! - [`table`]: exact joint tables over named discrete variables.
//! - [`independence`]: exact CI and mutual-independence checks, and the
//!   coarsening-minimality check for a conditioner.
//! - [`claims`]: the deconfounder claim (premises and conclusion) with the
//!   fixtures that refute it.
//! - [`search`]: counterexample search for arbitrary CI implication queries.
//! - [`pipeline`]: sampling, latent-class EM, substitute confounders and the
//!   adjustment functional with degenerate-stratum reporting.

pub mod claims;
pub mod error;
pub mod format;
pub mod independence;
pub mod pipeline;
pub mod rational;
pub mod search;
pub mod statement;
pub mod table;

pub use error::{Error, Result};
pub use rational::Rational;
pub use statement::{CIStatement, MutualStatement, NameSet, Statement};
pub use table::{Assignment, JointTable, Schema, Variable};
