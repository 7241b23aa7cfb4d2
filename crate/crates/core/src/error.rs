//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by model construction, file ingestion, and the numerical
/// routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The intensity model was evaluated where it is not positive
    /// (identity link with non-positive linear predictor).
    #[error("non-positive intensity at ({x}, {y}): linear predictor = {predictor}")]
    NonPositiveIntensity { x: f64, y: f64, predictor: f64 },

    /// A numerical routine failed (factorization breakdown, non-convergence
    /// of an integral or series, singular sensitivity matrix, ...).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A file could not be parsed. `line` is 1-based.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Point coordinates fell outside the declared window. All offending
    /// 1-based line numbers are reported.
    #[error("{path}: coordinates outside the window on line(s) {}", format_lines(lines))]
    PointsOutsideWindow { path: String, lines: Vec<usize> },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn format_lines(lines: &[usize]) -> String {
    let mut s = lines
        .iter()
        .take(20)
        .map(|l| l.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    if lines.len() > 20 {
        s.push_str(&format!(", ... ({} total)", lines.len()));
    }
    s
}

pub type Result<T> = std::result::Result<T, Error>;
