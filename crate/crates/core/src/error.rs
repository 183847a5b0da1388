use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A single violated parameter constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub constraint: String,
    pub value: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} (got {})", self.field, self.constraint, self.value)
    }
}

/// Every invariant a raw parameter set failed, in declaration order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub(crate) fn push(
        &mut self,
        field: impl Into<String>,
        constraint: impl Into<String>,
        value: f64,
    ) {
        self.violations.push(Violation {
            field: field.into(),
            constraint: constraint.into(),
            value,
        });
    }

    pub(crate) fn single(
        field: impl Into<String>,
        constraint: impl Into<String>,
        value: f64,
    ) -> Self {
        let mut r = Self::default();
        r.push(field, constraint, value);
        r
    }

    pub(crate) fn prefixed(mut self, prefix: &str) -> Self {
        for v in &mut self.violations {
            v.field = format!("{prefix}.{}", v.field);
        }
        self
    }

    pub(crate) fn extend(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }

    pub(crate) fn into_result<T>(self, value: T) -> Result<T, ValidationReport> {
        if self.is_empty() {
            Ok(value)
        } else {
            Err(self)
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

impl std::error::Error for ValidationReport {}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Validation(#[from] ValidationReport),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("argument outside the convergence domain: {0}")]
    Domain(String),

    #[error("no exponential moment: {0}")]
    NoExponentialMoment(String),

    #[error("quadrature did not converge: {what} (estimated error {estimate:e}, requested {requested:e})")]
    Quadrature {
        what: String,
        estimate: f64,
        requested: f64,
    },

    #[error("damping strip violated: {0}")]
    Strip(String),

    #[error("frequency truncation error above tolerance: {0}")]
    Truncation(String),

    #[error("finite differences are ill-conditioned at order {order}: noise {noise:e} exceeds tolerance {tol:e}")]
    Conditioning { order: usize, noise: f64, tol: f64 },

    #[error("model is not symmetric: {0}")]
    NotSymmetric(String),

    #[error("sampler exceeded its iteration cap of {0}")]
    IterationCap(usize),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed input: {0}")]
    Parse(String),
}

impl Error {
    /// Process exit code for the command-line frontend.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::Precondition(_)
            | Error::NotSymmetric(_)
            | Error::Parse(_) => 1,
            Error::Io(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
