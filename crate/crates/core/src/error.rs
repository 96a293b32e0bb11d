use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("Euler-rate matrix is singular at pitch {pitch} rad")]
    EulerSingularity { pitch: f64 },
    #[error("airspeed {airspeed} m/s is below the model validity floor")]
    LowAirspeed { airspeed: f64 },
    #[error("state became non-finite")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrimError {
    #[error("trim solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("trim input on channel {channel} is {value}, outside saturation limits")]
    Saturated { channel: usize, value: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("episode already finished; call reset first")]
    EpisodeFinished,
    #[error("unknown path id {0}")]
    UnknownPath(usize),
    #[error("degenerate control margin on channel {channel}: reference command sits on a limit")]
    DegenerateMargin { channel: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss in epoch {epoch}, minibatch {minibatch}: policy {policy_loss}, value {value_loss}")]
    NonFiniteLoss { epoch: usize, minibatch: usize, policy_loss: f64, value_loss: f64 },
    #[error("resume mismatch: {0}")]
    ResumeMismatch(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl From<serde_json::Error> for NnError {
    fn from(e: serde_json::Error) -> Self {
        NnError::Config(ConfigError::Json(e))
    }
}

impl From<std::io::Error> for NnError {
    fn from(e: std::io::Error) -> Self {
        NnError::Config(ConfigError::Io(e))
    }
}

impl From<std::io::Error> for TrainError {
    fn from(e: std::io::Error) -> Self {
        TrainError::Config(ConfigError::Io(e))
    }
}

impl From<serde_json::Error> for TrainError {
    fn from(e: serde_json::Error) -> Self {
        TrainError::Config(ConfigError::Json(e))
    }
}

impl From<csv::Error> for TrainError {
    fn from(e: csv::Error) -> Self {
        TrainError::Config(ConfigError::Csv(e))
    }
}
