//! Crate-wide error type.
//!
//! One enum for the whole library keeps `Result` plumbing uniform across the
//! pipeline stages; the CLI maps [`ErrorClass`] to process exit codes.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // survey ingestion
    #[error("missing or malformed header row (expected `id,department,<questions...>`)")]
    MissingHeader,
    #[error("question column `{column}` is not in the schema")]
    UnknownQuestionColumn { column: String },
    #[error("question column `{column}` appears twice in the header")]
    DuplicateQuestionColumn { column: String },
    #[error("row {row}, column `{column}`: response out of range (expected an integer 1-5)")]
    OutOfRangeResponse { row: usize, column: String },
    #[error("duplicate respondent id `{id}`")]
    DuplicateRespondentId { id: String },
    #[error("row {row}: expected {expected} fields, got {got}")]
    RaggedRow {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("label bands are empty")]
    EmptyBands,
    #[error("band thresholds must be strictly decreasing")]
    NonMonotoneBands,
    #[error("feature `{feature}`: counts cannot be rescaled to the requested size")]
    InconsistentCounts { feature: String },

    // genetic algorithm
    #[error("expected {expected} genes, got {got}")]
    WrongGeneCount { expected: usize, got: usize },
    #[error("objective must be non-negative, got {value}")]
    NegativeObjective { value: f64 },
    #[error("total fitness is not positive; roulette selection needs positive fitness")]
    ZeroTotalFitness,
    #[error("gene counts differ: {left} vs {right}")]
    GeneCountMismatch { left: usize, right: usize },

    // shared numeric contracts
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value at row {row}, column {column}")]
    NonFiniteFeature { row: usize, column: usize },
    #[error("labels are required for this operation but the matrix has none")]
    MissingLabels,
    #[error("matrix has no rows")]
    EmptyMatrix,

    // svm
    #[error("training labels contain a single class")]
    SingleClassInput,
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("invalid range: {what}")]
    InvalidRange { what: String },

    // feature selection
    #[error("feature mask has no bits set")]
    EmptyMask,
    #[error("feature universes differ: {detail}")]
    FeatureUniverseMismatch { detail: String },

    // evaluation
    #[error("class {class} has {count} members, too few for a stratified split")]
    ClassTooSmall { class: usize, count: usize },
    #[error("{n} samples cannot be split into {k} folds")]
    TooFewSamples { n: usize, k: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("label {id} is outside the class set (K = {class_count})")]
    UnknownClass { id: usize, class_count: usize },
    #[error("a split partition is empty; adjust the train fraction")]
    EmptyPartition,

    // report
    #[error("no runs to aggregate")]
    EmptyRuns,

    // plumbing
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("config: {message}")]
    Config { message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("internal invariant violated: {message}")]
    Internal { message: String },
}

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Problems with user-supplied data or configuration.
    Data,
    /// Unexpected failures: write errors, broken invariants.
    Internal,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Stage { source, .. } => source.class(),
            Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => ErrorClass::Data,
            Error::Io(_) | Error::Internal { .. } => ErrorClass::Internal,
            _ => ErrorClass::Data,
        }
    }

    /// Wraps an error with the pipeline stage it surfaced in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
