use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A problem size exceeds a configured enumeration or memory cap.
    #[error("resource limit exceeded: {what} (limit {limit}, requested {requested})")]
    Resource {
        what: &'static str,
        limit: usize,
        requested: usize,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    /// Couplings that diverge for the requested parameters.
    #[error("singular parameters: {0}")]
    Singular(String),

    #[error("integration failed at t = {time} us: {quantity} {value:.3e} exceeds {limit:.1e}; try a smaller step (current dt = {dt:.3e} us)")]
    Integration {
        time: f64,
        quantity: &'static str,
        value: f64,
        limit: f64,
        dt: f64,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    TrainingDiverged {
        epoch: usize,
        reason: String,
        /// Last finite parameter set, serialized as a checkpoint document.
        snapshot: Box<crate::rbm::RbmParams>,
    },

    #[error("config error in {location}: {message}")]
    Config { location: String, message: String },

    #[error("provenance mismatch: {0}")]
    Provenance(String),

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Format { .. } | Error::Argument(_) | Error::Json(_) => 2,
            Error::Provenance(_) => 4,
            Error::Io { .. } => 2,
            Error::Resource { .. }
            | Error::Singular(_)
            | Error::Integration { .. }
            | Error::Numeric(_)
            | Error::TrainingDiverged { .. } => 3,
        }
    }
}
