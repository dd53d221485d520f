use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite gradient in layer `{layer}`")]
    NonFiniteGradient { layer: String },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("feature vector {0:?} lies outside the feasible box")]
    OutOfBox([f64; 3]),

    #[error("sample too small: need at least {needed} points, got {got}")]
    SampleTooSmall { needed: usize, got: usize },

    #[error("query synthesis failed: every restart produced a non-finite objective")]
    SynthesisFailed,

    #[error("target {index} at {position:?} not reached within {max_steps} steps")]
    TargetUnreachable {
        index: usize,
        position: [f64; 3],
        max_steps: usize,
    },

    #[error("invalid trajectory: {0}")]
    Trajectory(String),

    #[error("{kind} file truncated at byte offset {offset}")]
    Truncated { kind: &'static str, offset: usize },

    #[error("corrupt {kind} file at byte offset {offset}: {reason}")]
    Corrupt {
        kind: &'static str,
        offset: usize,
        reason: String,
    },

    #[error("unsupported {kind} format version {found} (expected {expected})")]
    Version {
        kind: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("{path}:{line}: {reason}")]
    Parse { path: String, line: usize, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("run with seed {seed} failed: {source}")]
    Run {
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
