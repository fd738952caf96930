use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by dataset handling, training and diagnostics.
#[derive(Debug, Error)]
pub enum NcelmError {
    #[error("dataset file not found: {path}")]
    MissingFile { path: PathBuf },

    #[error("failed to read CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("CSV has no header row or no columns")]
    EmptyCsv,

    #[error("label column {column} not found in header")]
    LabelColumnNotFound { column: String },

    #[error("data row {row}, column '{column}': cannot parse '{value}' as a finite number")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("data row {row}: label cell is empty")]
    EmptyLabel { row: usize },

    #[error("dataset contains a single class '{label}'; at least two are required")]
    SingleClass { label: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("standardization requires at least 2 rows, got {rows}")]
    TooFewRows { rows: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("split would leave the {part} part empty (n={n}, test_fraction={fraction})")]
    EmptySplit {
        part: &'static str,
        n: usize,
        fraction: f64,
    },

    #[error("test_fraction must lie in (0, 1), got {fraction}")]
    InvalidFraction { fraction: f64 },

    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },

    #[error(
        "numerical degeneracy in learner {learner}, iteration {iteration} \
         (lambda={lambda:e}, c={c:e}): {detail}"
    )]
    NumericalDegeneracy {
        learner: usize,
        iteration: usize,
        lambda: f64,
        c: f64,
        detail: String,
    },

    #[error("model/dataset mismatch: {reason}")]
    ModelMismatch { reason: String },

    #[error("distance between the two points is zero; contraction ratio undefined")]
    ZeroDistance,

    #[error("failed to parse model JSON: {0}")]
    ModelParse(#[from] serde_json::Error),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, NcelmError>;

impl NcelmError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NcelmError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the input data rather than by numerics.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, NcelmError::NumericalDegeneracy { .. })
    }
}
