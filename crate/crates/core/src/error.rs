use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{count} malformed line(s) in {path}: first at line {first_line}: {first_message}")]
    MalformedLines {
        path: PathBuf,
        count: usize,
        first_line: usize,
        first_message: String,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("missing key: {0}")]
    MissingKey(String),

    #[error("triplet pool exhausted: no anchor has an eligible positive")]
    TripletExhausted,

    #[error("non-finite value at iteration {iteration}: {context}")]
    NonFinite { iteration: usize, context: String },

    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("missing artifact for stage `{stage}`: {path}")]
    MissingArtifact { stage: String, path: PathBuf },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
