use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval [{start}, {end}]")]
    InvalidInterval { start: f64, end: f64 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("srt cue {cue}: {reason}")]
    Srt { cue: String, reason: String },

    #[error("unknown episode `{0}`")]
    UnknownEpisode(String),

    #[error("posterior stream references unknown window `{0}`")]
    UnknownWindow(String),

    #[error("dictionary `{0}` contains no words")]
    EmptyDictionary(String),

    #[error("signers missing from split spec: {}", .0.join(", "))]
    MissingSigners(Vec<String>),

    #[error("signer `{signer}` assigned to both {first} and {second}")]
    SignerConflict {
        signer: String,
        first: String,
        second: String,
    },

    #[error("unknown annotation `{0}`")]
    UnknownAnnotation(String),

    #[error("invalid verdict: {0}")]
    InvalidVerdict(String),

    #[error("{0}")]
    Invalid(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}:{line}: {source}", .path.display())]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the filesystem rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
