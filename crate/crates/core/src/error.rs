use thiserror::Error;

use crate::grid::Region;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("region {region} lies outside a {rows}x{cols} lattice")]
    OutOfBounds {
        region: Region,
        rows: usize,
        cols: usize,
    },

    #[error("invalid region rows {row_start}..={row_end}, cols {col_start}..={col_end}")]
    InvalidRegion {
        row_start: usize,
        row_end: usize,
        col_start: usize,
        col_end: usize,
    },

    #[error("insufficient history at day {day}: need {needed} days, have {available}")]
    InsufficientHistory {
        day: i64,
        needed: usize,
        available: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected_rows}x{expected_cols}, found {found_rows}x{found_cols}")]
    Shape {
        expected_rows: usize,
        expected_cols: usize,
        found_rows: usize,
        found_cols: usize,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate lattice design: {points} points cannot fill {bands} bands")]
    DegenerateDesign { points: usize, bands: usize },

    #[error("singular least-squares fit; collinear features: {}", features.join(", "))]
    SingularFit { features: Vec<String> },

    #[error("GLM fit failed: {0}")]
    FitFailed(String),

    #[error(
        "threshold bracket [{lo}, {hi}] does not enclose target ARL {target}: measured {lo_arl} and {hi_arl}"
    )]
    Bracket {
        lo: f64,
        hi: f64,
        lo_arl: f64,
        hi_arl: f64,
        target: f64,
    },

    #[error("ARL not monotone in threshold: {0}")]
    NonMonotone(String),

    #[error("day sequence has gaps; missing days: {missing:?}")]
    DayGap { missing: Vec<i64> },

    #[error("malformed input at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: (usize, usize), found: (usize, usize)) -> Self {
        Error::Shape {
            expected_rows: expected.0,
            expected_cols: expected.1,
            found_rows: found.0,
            found_cols: found.1,
        }
    }
}
