use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Dimension {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("training diverged at step {step}: {what}")]
    Training { step: usize, what: String },

    #[error("index {index} out of range for {what} (len {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("cannot parse architecture id at position {position}: {reason}")]
    Parse { position: usize, reason: String },

    #[error("degenerate target: variance is zero")]
    DegenerateTarget,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no feasible architecture; minimal achievable cost is {min_params} params / {min_macs} MACs")]
    Infeasible { min_params: u64, min_macs: u64 },

    #[error("architecture {0} is not covered by the score lists")]
    Coverage(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("search space has {size} architectures, above the bench cap of {cap}")]
    BenchCap { size: String, cap: u64 },

    #[error("batch of {0} rows is too small; at least 2 are required")]
    BatchSize(usize),

    #[error("config error at {path}: {reason}")]
    Config { path: String, reason: String },

    #[error("artifact {path} was produced under config {found}, expected {expected}")]
    HashMismatch {
        path: PathBuf,
        found: String,
        expected: String,
    },

    #[error("generation {generation}: {source}")]
    Generation {
        generation: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("malformed artifact {path}: {reason}")]
    Artifact { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn artifact(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Artifact {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    pub(crate) fn in_generation(self, generation: usize) -> Self {
        Error::Generation {
            generation,
            source: Box::new(self),
        }
    }

    /// Process exit code grouping for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Io { .. } | Error::Artifact { .. } | Error::HashMismatch { .. } => 3,
            Error::Training { .. } => 4,
            Error::Infeasible { .. } => 5,
            Error::Verification(_) => 6,
            Error::Generation { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
