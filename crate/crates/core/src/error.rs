use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Location of a malformed token or cell in an input file (1-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

/// Which consistency rule a filtered chain broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsistencyRule {
    /// The chain has no symbols, or its first symbol is a blank.
    MissingInitialState,
    /// An observed state is not an endpoint of any recorded transition.
    UnjustifiedObservation,
    /// Two adjacent observed states form a transition outside the support.
    UnsupportedPair,
    /// No path of unrecorded transitions bridges an interior gap.
    UnreachableGap,
    /// No path of unrecorded transitions covers the trailing blanks.
    UnreachableTail,
}

impl fmt::Display for ConsistencyRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConsistencyRule::MissingInitialState => "initial state must be observed",
            ConsistencyRule::UnjustifiedObservation => {
                "observed state has no adjacent recorded transition"
            }
            ConsistencyRule::UnsupportedPair => "adjacent observed states form a structural zero",
            ConsistencyRule::UnreachableGap => "gap cannot be bridged by unrecorded transitions",
            ConsistencyRule::UnreachableTail => {
                "trailing blanks cannot be covered by unrecorded transitions"
            }
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsistencyError {
    /// 0-based position in the filtered chain.
    pub position: usize,
    pub rule: ConsistencyRule,
}

impl fmt::Display for ConsistencyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "token {}: {}", self.position + 1, self.rule)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected} states, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("parse error at {0}")]
    Parse(ParseError),

    #[error("row {row} has zero total count")]
    ZeroRowTotal { row: usize },

    #[error("chain of length {len} is too short for order {order}")]
    ChainTooShort { len: usize, order: usize },

    #[error("inconsistent filtered chain at {0}")]
    Consistency(ConsistencyError),

    #[error("gap from state {from} over {steps} steps has zero probability under the current parameters")]
    ZeroDenominator { from: usize, steps: usize },

    #[error("observed log-likelihood is not finite")]
    NonFinite,

    #[error("information block for row {row} is singular")]
    SingularBlock { row: usize },

    #[error("SEM rate for parameter {param} did not converge")]
    RowNotConverged { param: usize },

    #[error("I - M1 is singular")]
    SingularIMinusM1,

    #[error("covariance matrix is singular or not positive definite")]
    SingularCovariance,

    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),

    #[error("enumeration needs {required} candidates, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("no completion is consistent with the filtered chain")]
    EmptyCompletionSet,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<ParseError> for Error {
    fn from(e: ParseError) -> Self {
        Error::Parse(e)
    }
}

impl From<ConsistencyError> for Error {
    fn from(e: ConsistencyError) -> Self {
        Error::Consistency(e)
    }
}
