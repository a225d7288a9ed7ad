use thiserror::Error;

/// Errors raised across the crate.
///
/// Every variant maps onto one of the driver's exit codes through
/// [`Error::exit_code`]: validation problems (bad geometry, bad input, bad
/// configuration) exit with 2, numerical failures exit with 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("resonance: interior operator is singular at omega = {omega} (min |eigenvalue| = {min_modulus:e})")]
    Resonance { omega: f64, min_modulus: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Resonance { .. } | Error::Numerical(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
