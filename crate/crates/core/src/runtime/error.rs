use thiserror::Error;

use crate::config::ConfigError;
use crate::tensor::ShapeError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("no module or state at '{0}'")]
    BadPath(String),
    #[error("no active invocation context on this thread")]
    NoContext,
    #[error("unknown activation '{0}'")]
    UnknownActivation(String),
    #[error("rotary embedding needs an even dimension, got {0}")]
    OddDim(usize),
    #[error("top_k={k} exceeds num_experts={experts}")]
    BadK { k: usize, experts: usize },
    #[error("no behavior registered for factory '{0}'")]
    UnknownBehavior(String),
    #[error("invalid config at '{path}': {reason}")]
    InvalidConfig { path: String, reason: String },
}

impl RuntimeError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Config(e) => e.code(),
            Self::Shape(_) => "E_SHAPE",
            Self::BadPath(_) => "E_BAD_PATH",
            Self::NoContext => "E_NO_CONTEXT",
            Self::UnknownActivation(_) => "E_UNKNOWN_ACTIVATION",
            Self::OddDim(_) => "E_ODD_DIM",
            Self::BadK { .. } => "E_BAD_K",
            Self::UnknownBehavior(_) => "E_UNKNOWN_BEHAVIOR",
            Self::InvalidConfig { .. } => "E_INVALID_CONFIG",
        }
    }
}

impl From<ShapeError> for RuntimeError {
    fn from(e: ShapeError) -> Self {
        RuntimeError::Shape(e.0)
    }
}

pub type Result<T, E = RuntimeError> = std::result::Result<T, E>;
