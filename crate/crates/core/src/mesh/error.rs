use thiserror::Error;

use crate::config::ConfigError;
use crate::runtime::RuntimeError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("{what} is not divisible: {detail}")]
    Indivisible { what: String, detail: String },
    #[error("mesh shape {0:?} has more than one wildcard")]
    MultipleWildcards(Vec<i64>),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("partition spec references unknown mesh axis '{0}'")]
    UnknownAxis(String),
    #[error("mesh axis '{0}' is used more than once in a partition spec")]
    DuplicateAxis(String),
    #[error("partition spec of rank {spec} applied to tensor of rank {tensor}")]
    RankMismatch { spec: usize, tensor: usize },
    #[error("remat pattern '{0}' matches no module path")]
    NoMatch(String),
    #[error("remat policy at '{path}' names unknown tag '{tag}'")]
    UnknownTag { path: String, tag: String },
    #[error("invalid remat decision '{0}'")]
    BadDecision(String),
    #[error("unknown remat policy '{0}'")]
    UnknownPolicy(String),
    #[error("invalid pattern '{pattern}': {reason}")]
    BadPattern { pattern: String, reason: String },
    #[error("unknown instance type '{0}'")]
    UnknownInstance(String),
    #[error("catalog line {line}: {reason}")]
    Catalog { line: usize, reason: String },
    #[error("invalid modifier: {0}")]
    BadModifier(String),
    #[error("per-device footprint of {needed} bytes exceeds {available} bytes of HBM")]
    Oom { needed: u128, available: u128 },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

impl MeshError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Indivisible { .. } => "E_INDIVISIBLE",
            Self::MultipleWildcards(_) => "E_MULTIPLE_WILDCARDS",
            Self::InvalidMesh(_) => "E_INVALID_MESH",
            Self::UnknownAxis(_) => "E_UNKNOWN_AXIS",
            Self::DuplicateAxis(_) => "E_DUPLICATE_AXIS",
            Self::RankMismatch { .. } => "E_RANK_MISMATCH",
            Self::NoMatch(_) => "E_NO_MATCH",
            Self::UnknownTag { .. } => "E_UNKNOWN_TAG",
            Self::BadDecision(_) => "E_BAD_DECISION",
            Self::UnknownPolicy(_) => "E_UNKNOWN_POLICY",
            Self::BadPattern { .. } => "E_BAD_PATTERN",
            Self::UnknownInstance(_) => "E_UNKNOWN_INSTANCE",
            Self::Catalog { .. } => "E_CATALOG",
            Self::BadModifier(_) => "E_BAD_MODIFIER",
            Self::Oom { .. } => "E_OOM",
            Self::Config(e) => e.code(),
            Self::Runtime(e) => e.code(),
        }
    }
}
