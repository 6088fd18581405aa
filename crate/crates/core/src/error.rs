use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent with another.
    #[error("configuration error: {0}")]
    Config(String),

    /// Array shapes or dimensions do not agree.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A chain or world description failed to parse or validate.
    #[error("invalid {kind} description: {message}")]
    Parse { kind: &'static str, message: String },

    #[error("policy state error: {0}")]
    Policy(String),

    #[error("non-finite control in particle {particle}")]
    NonFiniteControl { particle: usize },

    #[error("training diverged at epoch {epoch}; last finite loss {last_finite_loss}")]
    TrainingDiverged { epoch: usize, last_finite_loss: f64 },

    #[error("simulation diverged at step {step}: non-finite state")]
    Diverged { step: usize },

    #[error("target script is empty")]
    EmptyScript,

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
