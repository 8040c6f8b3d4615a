use std::fmt;

use thiserror::Error;

/// A single broken invariant found while validating an instance or agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation(pub String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {}", join(.0))]
    InvalidInstance(Vec<Violation>),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("prospect probabilities sum to {0}, expected 1")]
    ProbabilitiesNotNormalized(f64),
    #[error("operation `{0}` needs a weighting function; agent only carries explicit decision weights")]
    ExplicitWeights(&'static str),
    #[error("weighting family `{0}` has no shape guarantee for this operation")]
    UnsupportedFamily(String),
    #[error("optimal-lottery structure undefined: p* = {p_star} exceeds (k-1)/k for k = {k}")]
    StructureUndefined { p_star: f64, k: usize },
    #[error("problem is unbounded")]
    Unbounded,
    #[error("search needs {required} profile evaluations, budget is {budget}; use local search")]
    BudgetExceeded { required: u128, budget: u128 },
    #[error("dimension {dim} exceeds the supported maximum {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.0.as_str()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
