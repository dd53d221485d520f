use std::path::PathBuf;

use stl_api::{ErrorCode, QueryKind};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown or expired query `{0}`")]
    UnknownQuery(String),

    #[error("query `{0}` was already answered")]
    Duplicate(String),

    #[error("query is a {expected} query, got a {got} label")]
    KindMismatch { expected: QueryKind, got: QueryKind },

    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("no more {0} queries available")]
    Exhausted(QueryKind),

    #[error("preference training needs a trained level model; retrain task a first")]
    NotTrained,

    #[error("no {0} labels to train on")]
    EmptyPool(QueryKind),

    #[error("trajectory `{0}` not found")]
    NotFound(String),

    #[error("{0}")]
    BadRequest(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] stl_core::Error),
}

impl ServiceError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn code(&self) -> ErrorCode {
        match self {
            Self::UnknownQuery(_) => ErrorCode::UnknownQuery,
            Self::Duplicate(_) => ErrorCode::Duplicate,
            Self::KindMismatch { .. } => ErrorCode::KindMismatch,
            Self::InvalidLabel(_) => ErrorCode::InvalidLabel,
            Self::Exhausted(_) => ErrorCode::Exhausted,
            Self::NotTrained => ErrorCode::NotTrained,
            Self::EmptyPool(_) => ErrorCode::EmptyPool,
            Self::NotFound(_) => ErrorCode::NotFound,
            Self::BadRequest(_) => ErrorCode::BadRequest,
            Self::Io { .. } | Self::Core(_) | Self::Internal(_) => ErrorCode::Internal,
        }
    }
}
