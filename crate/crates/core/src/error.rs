use thiserror::Error;

/// Errors produced by the workbench.
///
/// The CLI maps [`Error::Design`] to exit code 2 and everything else to 1.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Cell parameters violate their physical invariants.
    #[error("invalid cell parameters: {0}")]
    Parameter(String),

    /// Malformed input file or record.
    #[error("format error{}: {msg}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Format { row: Option<usize>, msg: String },

    /// Non-finite or otherwise unusable measurement.
    #[error("input error: {0}")]
    Input(String),

    /// Gain design failed or a gain set is not Hurwitz.
    #[error("design error: {0}")]
    Design(String),

    /// Identification (OCV extraction, parameter fitting) failed.
    #[error("identification error: {0}")]
    Identification(String),

    /// Numerical breakdown inside a filter.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn format(row: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Format {
            row,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
