use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("interval must be positive, got {0}")]
    InvalidInterval(f64),

    #[error("simulation diverged at step {step}")]
    SimulationDiverged { step: usize },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("{path}: non-uniform sample spacing at line {line} (expected dt={expected}, found {found})")]
    NonUniformSpacing {
        path: String,
        line: u64,
        expected: f64,
        found: f64,
    },

    #[error("{0}: record contains no samples")]
    EmptyRecord(String),

    #[error("sample count mismatch: header declares {expected}, found {found}")]
    CountMismatch { expected: usize, found: usize },

    #[error("uncontrolled peaks are degenerate (all zero); reward normalisation impossible")]
    DegeneratePeaks,

    #[error("probe failed: {0}")]
    ProbeFailed(String),

    #[error("cannot build filter: {0}")]
    FilterBuild(String),

    #[error("length mismatch: expected {expected}, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite gradient in layer {layer}: {detail}")]
    NonFiniteGradient { layer: usize, detail: String },

    #[error("replay buffer holds {have} windows, batch needs {need}")]
    InsufficientBuffer { have: usize, need: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("incompatible runs: {0}")]
    IncompatibleRuns(String),

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than internal failure.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::SimulationDiverged { .. } | Error::NonFiniteGradient { .. } | Error::Io(_)
        )
    }
}
