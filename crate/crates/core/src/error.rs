use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` out of range: {detail}")]
    OutOfRange { name: &'static str, detail: String },

    #[error("invalid world `{world_id}`: {reason}")]
    InvalidWorld { world_id: String, reason: String },

    #[error("goal `{goal}` is not satisfiable in world `{world_id}`")]
    Unsatisfiable { world_id: String, goal: String },

    #[error("world id mismatch: expected `{expected}`, got `{found}`")]
    WorldMismatch { expected: String, found: String },

    #[error("schema mismatch: expected `{expected}`, found `{found}`")]
    Schema { expected: String, found: String },

    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("variant rejected: {0}")]
    Variant(String),

    #[error("config: {0}")]
    Config(String),

    #[error("transport: {0}")]
    Transport(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn range(name: &'static str, detail: impl Into<String>) -> Self {
        Error::OutOfRange { name, detail: detail.into() }
    }

    /// Short stable tag used in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::OutOfRange { .. } => "out_of_range",
            Error::InvalidWorld { .. } => "invalid_world",
            Error::Unsatisfiable { .. } => "unsatisfiable",
            Error::WorldMismatch { .. } => "world_mismatch",
            Error::Schema { .. } => "schema_mismatch",
            Error::Line { .. } => "malformed_line",
            Error::Empty(_) => "empty_input",
            Error::Variant(_) => "variant_rejected",
            Error::Config(_) => "config",
            Error::Transport(_) => "transport",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
