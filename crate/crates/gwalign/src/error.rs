//! Error type shared by every module in the crate.
//!
//! The variants partition into three blame classes that the CLI maps onto
//! exit codes: configuration problems (usage), data/format problems, and
//! numerical failures of the solvers.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Underlying I/O failure while reading or writing a file.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A line of an input file could not be interpreted.
    #[error("format error at line {line}: {detail}")]
    Format { line: usize, detail: String },

    /// An embedding row carried the wrong number of values for the
    /// established dimensionality.
    #[error("row error at line {line}: expected {expected} values, found {found}")]
    Row {
        line: usize,
        expected: usize,
        found: usize,
    },

    /// An input that must be non-empty (vocabulary, weight vector, ...)
    /// turned out empty.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A vector that must be normalized has zero norm.
    #[error("zero-norm vector for word {word:?}")]
    DegenerateVector { word: String },

    /// A matrix violated a structural requirement (non-finite entries,
    /// asymmetry beyond tolerance, ...).
    #[error("degenerate matrix: {0}")]
    DegenerateMatrix(String),

    /// The Sinkhorn scaling vectors left the representable range at the
    /// given regularization strength.
    #[error("sinkhorn scaling underflowed at lambda = {lambda:e}")]
    NumericalUnderflow { lambda: f64 },

    /// Both the primary and the fallback regularization strengths
    /// underflowed; the solve cannot proceed.
    #[error(
        "sinkhorn scaling underflowed at lambda = {primary:e} and again at the fallback lambda = {fallback:e}"
    )]
    UnderflowAtFallback { primary: f64, fallback: f64 },

    /// Operands have incompatible dimensions.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Two similarity matrices that must share a metric do not.
    #[error("metric mismatch: {left} vs {right}")]
    MetricMismatch { left: String, right: String },

    /// Precision evaluation found no evaluable source word.
    #[error("empty evaluation set: {0}")]
    EmptyEvaluation(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A failure annotated with the pipeline stage that produced it.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps an error with the pipeline stage it occurred in. Stages do
    /// not nest: re-tagging keeps the innermost error but adopts the new
    /// stage name.
    pub fn at_stage(stage: &'static str, source: Error) -> Error {
        Error::Stage {
            stage,
            source: Box::new(source.into_root()),
        }
    }

    /// The pipeline stage this error was tagged with, if any.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    /// The underlying error with any stage tag removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    fn into_root(self) -> Error {
        match self {
            Error::Stage { source, .. } => source.into_root(),
            other => other,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
