use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },

    #[error("invalid MDP ({field}): {reason}")]
    InvalidMdp { field: &'static str, reason: String },

    #[error("invalid grid spec ({field}): {reason}")]
    InvalidGrid { field: &'static str, reason: String },

    #[error("invalid map text at line {line}: {reason}")]
    MapParse { line: usize, reason: String },

    #[error("invalid config ({field}): {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("index out of range: {what} = {index} (limit {limit})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error(
        "value iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NotConverged { iterations: usize, residual: f64 },

    #[error("terminal state {state} has nonzero potential {value}")]
    TerminalPotential { state: usize, value: f64 },

    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),

    #[error("result set mixes config digests: {0} vs {1}")]
    DigestMismatch(String, String),

    #[error("environment step failed: {0}")]
    Step(String),

    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error("config serialization error: {0}")]
    ConfigWrite(#[from] toml::ser::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn file_error(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::File {
        path: path.display().to_string(),
        source,
    }
}

pub(crate) fn ensure_finite(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { what, value })
    }
}
