use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("invalid gc policy: at least one of keep_last_n and keep_every_k must be enabled")]
    InvalidPolicy,
    #[error("trace of {len} steps is shorter than the window of {window}")]
    ShortTrace { len: usize, window: usize },
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("sdc check needs at least 2 repeats, got {0}")]
    TooFewRepeats(usize),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

impl SimError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::InvalidManifest(_) => "E_INVALID_MANIFEST",
            Self::InvalidPolicy => "E_INVALID_POLICY",
            Self::ShortTrace { .. } => "E_SHORT_TRACE",
            Self::InvalidTrace(_) => "E_INVALID_TRACE",
            Self::InvalidScenario(_) => "E_INVALID_SCENARIO",
            Self::TooFewRepeats(_) => "E_TOO_FEW_REPEATS",
            Self::Parse { .. } => "E_PARSE",
        }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
