use thiserror::Error;

use crate::rational::Rational;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("probabilities sum to {sum}, expected exactly 1")]
    SumNotOne { sum: Rational },
    #[error("negative probability {value}")]
    NegativeProbability { value: Rational },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("outcome `{label}` is not in the support of `{var}`")]
    UnknownOutcome { var: String, label: String },
    #[error("assignment listed twice: {0}")]
    DuplicateAssignment(String),
    #[error("variable `{0}` already exists")]
    DuplicateVariable(String),
    #[error("variable `{var}` has an invalid support: {reason}")]
    InvalidSupport { var: String, reason: String },
    #[error("assignment is not full: missing `{0}`")]
    IncompleteAssignment(String),
    #[error("conditioning event has probability zero: {0}")]
    ZeroProbabilityEvent(String),
    #[error("value map has no entry for outcome `{label}` of `{var}`")]
    MissingValue { var: String, label: String },
    #[error("variable sets overlap on `{0}`")]
    OverlappingSets(String),
    #[error("malformed statement: {0}")]
    MalformedStatement(String),
    #[error("support of `{var}` has {size} positive points, bound is {bound}")]
    SupportTooLarge { var: String, size: usize, bound: usize },
    #[error("invalid roles: {0}")]
    Role(String),
    #[error("schema has {cells} cells, bound is {bound}")]
    SchemaTooLarge { cells: u128, bound: u128 },
    #[error("grid has {tables} tables, bound is {bound}")]
    GridTooLarge { tables: u128, bound: u128 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset is empty")]
    EmptyData,
    #[error("`{z}` is not a deterministic function of the causes")]
    NotDeterministic { z: String },
    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
