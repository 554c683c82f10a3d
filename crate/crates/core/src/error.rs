use thiserror::Error;

/// Errors raised by the samplers, oracles and the experiment harness.
#[derive(Debug, Error)]
pub enum TgdError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numerical failure{}: {message}", stage_suffix(*.stage))]
    Numerical {
        stage: Option<usize>,
        message: String,
    },

    #[error("degenerate ensemble at stage {stage}: every particle has zero weight")]
    DegenerateEnsemble { stage: usize },

    #[error("degenerate posterior: {0}")]
    DegeneratePosterior(String),

    #[error("grid box too small: boundary mass {mass:.3e} exceeds {threshold:.3e}")]
    BoxTooSmall { mass: f64, threshold: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn stage_suffix(stage: Option<usize>) -> String {
    match stage {
        Some(s) => format!(" at stage {s}"),
        None => String::new(),
    }
}

impl TgdError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        TgdError::Parameter(msg.into())
    }

    pub(crate) fn numerical(message: impl Into<String>) -> Self {
        TgdError::Numerical {
            stage: None,
            message: message.into(),
        }
    }

    /// Attach a stage label to errors that carry one.
    pub fn at_stage(self, stage: usize) -> Self {
        match self {
            TgdError::Numerical { stage: None, message } => TgdError::Numerical {
                stage: Some(stage),
                message,
            },
            other => other,
        }
    }

    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            TgdError::Parameter(_) => "parameter",
            TgdError::Numerical { .. } => "numerical",
            TgdError::DegenerateEnsemble { .. } => "degenerate_ensemble",
            TgdError::DegeneratePosterior(_) => "degenerate_posterior",
            TgdError::BoxTooSmall { .. } => "box_too_small",
            TgdError::Config(_) => "config",
            TgdError::Io(_) => "io",
            TgdError::Csv(_) => "csv",
            TgdError::Json(_) => "json",
        }
    }
}

pub type Result<T, E = TgdError> = std::result::Result<T, E>;
