use std::fmt;

use thiserror::Error;

/// Pipeline stage of a two-sample test, used to attribute failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Covariance,
    Projection,
    Eigen,
    SelectP,
    Statistics,
    PValue,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Covariance => "covariance",
            Stage::Projection => "projection",
            Stage::Eigen => "eigen",
            Stage::SelectP => "select-p",
            Stage::Statistics => "statistics",
            Stage::PValue => "p-value",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {left} points vs {right} points")]
    GridMismatch { left: usize, right: usize },

    #[error("lag {lag} out of range for sample of size {n}")]
    InvalidLag { lag: usize, n: usize },

    #[error("insufficient sample: need at least {needed} curves, got {got}")]
    InsufficientSample { needed: usize, got: usize },

    #[error("FAR(1) kernel is not stationary: Hilbert-Schmidt norm {norm:.6} >= 1")]
    NonstationaryKernel { norm: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("degenerate spectrum: no positive eigenvalue")]
    DegenerateSpectrum,

    #[error("eigenvalue {index} is {value:e}, at or below the floor {floor:e}")]
    DegenerateEigenvalue { index: usize, value: f64, floor: f64 },

    #[error("p = {p} out of range (1..={available})")]
    POutOfRange { p: usize, available: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at(stage: Stage) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    /// The innermost error, skipping stage attribution.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
