use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed or schema-violating JSON/TOML. `location` is a dotted path
    /// into the document (e.g. `sentences[3].index`).
    #[error("schema error in {origin} at `{location}`: {message}")]
    Schema {
        origin: String,
        location: String,
        message: String,
    },

    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("prompt template `{template}` is missing slot `{slot}`")]
    MissingSlot { template: String, slot: String },

    #[error("backend transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("malformed backend response: {0}")]
    BackendResponse(String),

    #[error("no recorded transcript for {0}")]
    NoFixture(String),

    /// An LLM response could not be turned into a valid artifact even after
    /// the repair chain. `transcript` holds the raw responses that were seen.
    #[error("could not parse {stage} output: {message}")]
    Parse {
        stage: &'static str,
        message: String,
        transcript: Vec<String>,
    },

    #[error("scoring error: {0}")]
    Scoring(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(
        origin: impl Into<String>,
        location: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Schema {
            origin: origin.into(),
            location: location.into(),
            message: message.into(),
        }
    }

    /// True for failures that originate from an LLM or embedding backend.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            Error::Transport { .. } | Error::BackendResponse(_) | Error::NoFixture(_) | Error::Parse { .. }
        )
    }
}
