use thiserror::Error;

use crate::config::ConfigError;
use crate::mesh::MeshError;
use crate::runtime::RuntimeError;
use crate::sim::SimError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ComposerError {
    #[error("unknown experiment '{0}'")]
    UnknownExperiment(String),
    #[error("experiment '{experiment}' is broken: {reason}")]
    BrokenConfig { experiment: String, reason: String },
    #[error("layer definitions changed during the audit: {before} -> {after}")]
    MutatedCode { before: String, after: String },
    #[error("audit failed: {0}")]
    AuditFailed(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl ComposerError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::UnknownExperiment(_) => "E_UNKNOWN_EXPERIMENT",
            Self::BrokenConfig { .. } => "E_BROKEN_CONFIG",
            Self::MutatedCode { .. } => "E_MUTATED_CODE",
            Self::AuditFailed(_) => "E_AUDIT_FAILED",
            Self::Io(_) => "E_IO",
            Self::Config(e) => e.code(),
            Self::Runtime(e) => e.code(),
            Self::Mesh(e) => e.code(),
            Self::Sim(e) => e.code(),
        }
    }
}

impl From<std::io::Error> for ComposerError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

pub type Result<T, E = ComposerError> = std::result::Result<T, E>;
