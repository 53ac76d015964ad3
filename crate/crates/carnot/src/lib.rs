//! Simulation and training suite for a discrete-action ideal-gas heat engine.
//!
//! The crate couples a deterministic quasi-static engine model with two
//! trainers (an elitist evolutionary loop and a from-scratch PPO
//! implementation) and a brute-force cycle oracle used to certify the
//! efficiency of whatever the trainers discover.
//!
//! With the default `parallel` feature, population evaluation, batch
//! gradients, and oracle enumeration run on rayon; disabling the feature
//! yields bit-identical sequential results.

pub mod cli;
pub mod cycle;
pub mod engine;
pub mod evolve;
pub mod io;
pub mod oracle;
pub mod policy;
pub mod ppo;
pub mod seeds;
pub mod settings;

/// Crate-wide error type. `Usage` maps to CLI exit code 1, everything else
/// to exit code 2.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("{0}")]
    Runtime(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn io(path: impl Into<std::path::PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
