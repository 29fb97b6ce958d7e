use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },

    #[error("no closed form: {0}")]
    NoClosedForm(String),

    #[error("trajectory diverged at t = {time}")]
    Diverged { time: f64 },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid { .. }
            | Error::NoClosedForm(_)
            | Error::Schema(_)
            | Error::Config { .. } => 2,
            Error::Diverged { .. } => 3,
            Error::Io { .. } | Error::Json(_) => 4,
        }
    }

    /// Short machine-readable category for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Invalid { .. } => "validation",
            Error::NoClosedForm(_) => "no_closed_form",
            Error::Diverged { .. } => "divergence",
            Error::Schema(_) => "schema",
            Error::Config { .. } => "config",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
