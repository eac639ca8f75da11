//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is invalid; the message names the offending field.
    #[error("config error: {0}")]
    Config(String),

    /// Alias encoding was given unusable input (e.g. an empty first name).
    #[error("encoding error: {0}")]
    Encoding(String),

    /// An observation id could not be resolved through an entity partition.
    #[error("linkage error: observation {0} does not resolve to an entity")]
    Unresolved(String),

    /// A statistic is undefined for the given input (e.g. density on n < 2).
    #[error("undefined statistic: {0}")]
    Undefined(String),

    /// The ERGM design matrix is rank deficient or the fit did not converge.
    #[error("fit error: {0}")]
    Fit(String),

    /// An estimator assumption was violated (e.g. a reported degree < 1).
    #[error("estimator assumption violated: {0}")]
    Assumption(String),

    /// A pipeline stage failed; carries the stage name and the cause.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
