use thiserror::Error;

use crate::costmodel::Category;

pub type Result<T, E = SparqError> = std::result::Result<T, E>;

/// A single per-category disagreement found by [`crate::costmodel::reconcile`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryDiff {
    pub category: Category,
    pub counted: u64,
    pub expected: u64,
}

#[derive(Debug, Error)]
pub enum SparqError {
    #[error("empty-logits: softmax needs at least one logit")]
    EmptyLogits,

    #[error("bad-temperature: temperature must be positive and finite, got {0}")]
    BadTemperature(f64),

    #[error("index-out-of-range: index {index} not below bound {bound}")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("shape-mismatch: {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite: {0} contains NaN or infinite values")]
    NonFinite(&'static str),

    #[error("unordered-indices: index list must be strictly increasing")]
    UnorderedIndices,

    #[error("empty-cache: attention needs at least one cached position")]
    EmptyCache,

    #[error("invalid-config: {0}")]
    InvalidConfig(String),

    #[error("missing-parameter: {method} requires `{param}`")]
    MissingParameter {
        method: &'static str,
        param: &'static str,
    },

    #[error("ledger-analytic-divergence: counted {counted} vs analytic {expected}; {}", format_diffs(.diffs))]
    LedgerDivergence {
        counted: u64,
        expected: u64,
        diffs: Vec<CategoryDiff>,
    },

    #[error("degenerate-distribution: {0}")]
    DegenerateDistribution(&'static str),

    #[error("trace-parse-error at byte offset {offset}: {reason}")]
    TraceParse { offset: usize, reason: String },

    #[error("trace-shape-error: {0}")]
    TraceShape(String),

    #[error("sweep cell {cell}: {source}")]
    SweepCell {
        cell: String,
        #[source]
        source: Box<SparqError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("report serialization failed: {0}")]
    Report(String),
}

fn format_diffs(diffs: &[CategoryDiff]) -> String {
    diffs
        .iter()
        .map(|d| format!("{}: counted {} expected {}", d.category.label(), d.counted, d.expected))
        .collect::<Vec<_>>()
        .join(", ")
}

impl SparqError {
    /// Stable machine-readable code for the error family.
    pub fn code(&self) -> &'static str {
        match self {
            SparqError::EmptyLogits => "empty-logits",
            SparqError::BadTemperature(_) => "bad-temperature",
            SparqError::IndexOutOfRange { .. } => "index-out-of-range",
            SparqError::ShapeMismatch { .. } => "shape-mismatch",
            SparqError::NonFinite(_) => "non-finite",
            SparqError::UnorderedIndices => "unordered-indices",
            SparqError::EmptyCache => "empty-cache",
            SparqError::InvalidConfig(_) => "invalid-config",
            SparqError::MissingParameter { .. } => "missing-parameter",
            SparqError::LedgerDivergence { .. } => "ledger-analytic-divergence",
            SparqError::DegenerateDistribution(_) => "degenerate-distribution",
            SparqError::TraceParse { .. } => "trace-parse-error",
            SparqError::TraceShape(_) => "trace-shape-error",
            SparqError::SweepCell { source, .. } => source.code(),
            SparqError::Io(_) => "io",
            SparqError::Report(_) => "report",
        }
    }

    /// True when the error (possibly wrapped in a sweep cell) is a ledger divergence.
    pub fn is_ledger_divergence(&self) -> bool {
        self.code() == "ledger-analytic-divergence"
    }

    pub(crate) fn shape(what: &'static str, expected: usize, got: usize) -> Self {
        SparqError::ShapeMismatch {
            what,
            expected,
            got,
        }
    }
}
