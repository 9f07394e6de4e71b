use thiserror::Error;

/// Every fallible operation in the crate reports one of these.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two objects that must share a lattice or shape do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The configuration text or a configuration value is invalid.
    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        message: String,
    },

    /// The series seed is not accurate enough at the requested seeding time.
    #[error("seeding error: {0}")]
    Seeding(String),

    /// The adaptive integrator could not make progress.
    #[error("integration error: {0}")]
    Integration(String),

    /// A requested verification target failed to run (not: failed its verdict).
    #[error("target `{target}` failed")]
    Target {
        target: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Config {
            line,
            message: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
