use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CairoError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing target column `{0}`")]
    MissingTargetColumn(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("non-numeric cell {value:?} at row {row}, column `{column}`")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("dataset needs at least 2 rows, got {0}")]
    TooFewRows(usize),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("length mismatch: expected {expected}, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate split: {train} train rows and {test} test rows out of {n}")]
    DegenerateSplit { n: usize, train: usize, test: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("tie in {what} between indices {first} and {second}")]
    Ties {
        what: &'static str,
        first: usize,
        second: usize,
    },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("exhaustive oracle supports n <= 10, got {0}")]
    OracleTooLarge(usize),

    #[error("calibration map is empty")]
    EmptyMap,

    #[error("forward cache does not match current parameters")]
    StaleCache,

    #[error("aggregation needs at least 2 repetitions, model `{model}` has {found}")]
    TooFewRepetitions { model: String, found: usize },

    #[error("scenario {scenario}, model {model}, repetition {rep} failed: {source}")]
    Repetition {
        scenario: String,
        model: String,
        rep: usize,
        #[source]
        source: Box<CairoError>,
    },
}

pub type Result<T> = std::result::Result<T, CairoError>;

pub(crate) fn ensure_same_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(CairoError::LengthMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CairoError::NonFinite(what))
    }
}
