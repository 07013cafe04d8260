use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library. The CLI maps each variant to an exit code.
#[derive(Debug, Error)]
pub enum SmoError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("synthesis failed: {0}")]
    Synthesis(String),

    #[error("infeasible LMI for kappa = {kappa}, gamma = {gamma} (best max eigenvalue {best_max_eig:.3e})")]
    Infeasible {
        kappa: f64,
        gamma: f64,
        best_max_eig: f64,
    },

    #[error("observer diverged at step {step}")]
    ObserverDivergence { step: usize },

    #[error("plant integration failed at step {step}: {reason}")]
    PlantDivergence { step: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, SmoError>;

impl SmoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SmoError::Io {
            path: path.into(),
            source,
        }
    }
}
