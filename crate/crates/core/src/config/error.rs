use thiserror::Error;

use super::ValueKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("component kind '{0}' is already registered")]
    DuplicateKind(String),
    #[error("unknown component kind '{0}'")]
    UnknownKind(String),
    #[error("factory '{0}' is already registered")]
    DuplicateFactory(String),
    #[error("unknown factory '{0}'")]
    UnknownFactory(String),
    #[error("invalid schema for '{kind}': {reason}")]
    InvalidSchema { kind: String, reason: String },
    #[error("path '{0}' does not resolve")]
    BadPath(String),
    #[error("type mismatch at '{path}': expected {expected:?}, found {found}")]
    TypeMismatch {
        path: String,
        expected: ValueKind,
        found: String,
    },
    #[error("field '{0}' is required but unset")]
    Unset(String),
    #[error("cannot resolve '{path}': {reason}")]
    Resolve { path: String, reason: String },
    #[error("malformed golden text at line {line}: {reason}")]
    MalformedGolden { line: usize, reason: String },
}

impl ConfigError {
    /// Stable error code, used by the CLI's JSON output.
    pub fn code(&self) -> &'static str {
        match self {
            Self::DuplicateKind(_) => "E_DUPLICATE_KIND",
            Self::UnknownKind(_) => "E_UNKNOWN_KIND",
            Self::DuplicateFactory(_) => "E_DUPLICATE_FACTORY",
            Self::UnknownFactory(_) => "E_UNKNOWN_FACTORY",
            Self::InvalidSchema { .. } => "E_INVALID_SCHEMA",
            Self::BadPath(_) => "E_BAD_PATH",
            Self::TypeMismatch { .. } => "E_TYPE_MISMATCH",
            Self::Unset(_) => "E_UNSET",
            Self::Resolve { .. } => "E_RESOLVE",
            Self::MalformedGolden { .. } => "E_MALFORMED_GOLDEN",
        }
    }
}

pub type Result<T, E = ConfigError> = std::result::Result<T, E>;
