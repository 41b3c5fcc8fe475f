//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Structural problem in an instance description (self-loop, dangling
    /// endpoint, nonpositive reactance or capacity, non-dense ids, ...).
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    /// A connected component's injections do not sum to zero.
    #[error("component containing bus {bus} is imbalanced by {imbalance:.6e} (pass through load shedding first)")]
    Imbalance { bus: usize, imbalance: f64 },

    /// Eigensolver failure or a failed internal cross-check.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An operation that requires a non-cut line was handed a cut line,
    /// or vice versa.
    #[error("line {line} is a cut line here: {message}")]
    CutEdge { line: usize, message: String },

    /// The line was already removed from the pseudo-inverse's graph version.
    #[error("line {line} is not present in graph version {version}")]
    StaleVersion { line: usize, version: u64 },

    /// The two-sided component split did not separate cleanly.
    #[error("component split on line {line} failed: {message}")]
    Grouping { line: usize, message: String },

    /// Pre-failure flows already violate capacities (strict mode only).
    #[error("initial flows infeasible on lines {lines:?}")]
    InfeasibleInitialState { lines: Vec<usize> },

    /// Exhaustive search would enumerate more subsets than the cap allows.
    #[error("{subsets} subsets exceed the cap of {cap}")]
    TooLarge { subsets: u128, cap: u128 },

    /// A fixture parameter is outside its admissible range.
    #[error("parameter {param} out of range: {message}")]
    ParamRange {
        param: &'static str,
        message: String,
    },

    /// Random topology generation kept producing disconnected graphs.
    #[error("no connected graph after {attempts} attempts")]
    DisconnectedEnsemble { attempts: u32 },

    /// Bound formulas are only derived for unit reactance.
    #[error("line {line} has reactance {reactance}; this operation requires x = 1 on every line")]
    NonUnitReactance { line: usize, reactance: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(field: &str, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
