use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// `|beta * J|` exceeded the overflow guard.
    #[error("range error: |beta*J| = {value} exceeds {limit}")]
    Range { value: f64, limit: f64 },

    #[error("{}:{line}: {message}", source_name.as_deref().unwrap_or("<input>"))]
    Parse {
        source_name: Option<String>,
        line: usize,
        message: String,
    },

    /// The smallest Bethe-Hessian eigenvalue never went (deeply) negative on
    /// the scanned temperature range.
    #[error("no phase transition in beta range (0, {beta_max}]: deepest lambda1 = {deepest}")]
    NoTransition { beta_max: f64, deepest: f64 },

    /// lambda1 went negative but did not come back above zero before the
    /// scan hit its reliable range limit.
    #[error("transition unresolved: lambda1 still negative at beta = {last_negative}")]
    Unresolved { last_negative: f64, deepest: f64 },

    #[error(
        "eigensolver did not converge after {iterations} matvecs: {converged}/{wanted} pairs, worst residual {worst_residual:e}"
    )]
    NonConvergence {
        iterations: usize,
        converged: usize,
        wanted: usize,
        worst_residual: f64,
    },

    /// Two independent computations of the same quantity disagreed.
    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: None,
            line,
            message: message.into(),
        }
    }

    /// Attach a file name to a parse error.
    pub fn with_source(self, name: impl Into<String>) -> Self {
        match self {
            Error::Parse { line, message, .. } => Error::Parse {
                source_name: Some(name.into()),
                line,
                message,
            },
            other => other,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
