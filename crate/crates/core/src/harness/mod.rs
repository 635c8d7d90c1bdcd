//! Scenario files, runs, verification, sweeps and convergence studies.

pub mod config;
pub mod converge;
pub mod io;
pub mod run;
pub mod sweep;
pub mod verify;

use std::path::PathBuf;

use thiserror::Error;

use crate::bounds::BoundsError;
use crate::mas::SimError;
use crate::signals::SignalError;

/// Output root used when a config does not name one.
pub const OUTPUT_ENV: &str = "PDESYNC_OUT";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid {field}: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error("solver: {0}")]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },
    #[error("{0}")]
    Study(String),
}

impl HarnessError {
    /// Process exit code: 3 for a solver abort, 4 for bad input, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Sim(SimError::NonFinite { .. }) => 3,
            HarnessError::Parse(_)
            | HarnessError::Config { .. }
            | HarnessError::Signal(_)
            | HarnessError::Bounds(_)
            | HarnessError::Sim(_)
            | HarnessError::Study(_) => 4,
            HarnessError::Io { .. } | HarnessError::Data { .. } => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

/// `dir` if given, else `$PDESYNC_OUT`, else `./runs`.
pub fn output_root(dir: Option<&std::path::Path>) -> PathBuf {
    match dir {
        Some(d) => d.to_path_buf(),
        None => std::env::var_os(OUTPUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs")),
    }
}
