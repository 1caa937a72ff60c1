//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("csv line {line}: {detail}")]
    CsvFormat { line: usize, detail: String },
    #[error("csv line {line}: duplicate date {date}")]
    DuplicateDate {
        line: usize,
        date: chrono::NaiveDate,
    },
    #[error("csv line {line}: negative count")]
    NegativeCount { line: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("series '{0}' has no points")]
    EmptySeries(String),
    #[error("all counts in the window are zero; nothing to fit on a log scale")]
    AllCountsZero,
    #[error("window holds {found} usable points; at least {needed} required")]
    WindowTooSparse { needed: usize, found: usize },
    #[error("epoch mismatch: {0} vs {1}")]
    EpochMismatch(chrono::NaiveDate, chrono::NaiveDate),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("CFL violation: dt {dt} exceeds grid step {h}")]
    CflViolation { dt: f64, h: f64 },
    #[error("age span {span} is not an integer multiple of grid step {h}")]
    GridMismatch { span: f64, h: f64 },
    #[error("too few points: {found} given, {needed} required")]
    TooFewPoints { needed: usize, found: usize },
    #[error("abscissas are all identical; slope is undetermined")]
    DegenerateX,
    #[error("vectors have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("nonpositive entry at index {0}; projective distance needs positive vectors")]
    NonPositiveEntry(usize),
    #[error("bracket expansion failed: no sign change in [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },
    #[error("root finder did not reach tolerance {tol} (residual {residual})")]
    NoConvergence { tol: f64, residual: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
