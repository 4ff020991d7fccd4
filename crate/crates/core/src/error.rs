use std::path::PathBuf;

/// Errors raised anywhere in the arena kit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid tensor: {0}")]
    Tensor(String),

    /// An agent or arena was driven out of its call protocol.
    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("config file not found (searched `{}`)", .0.display())]
    ConfigNotFound(PathBuf),

    #[error("unknown {kind} `{name}`; registered: {}", .available.join(", "))]
    Registry {
        kind: &'static str,
        name: String,
        available: Vec<String>,
    },

    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    /// The arena does not expose the state surface a task or tool needs.
    #[error("capability error: {0}")]
    Capability(String),

    #[error("action rejected: {0}")]
    ActionRejected(String),

    #[error("unknown metric `{name}`; available: {}", .available.join(", "))]
    UnknownMetric { name: String, available: Vec<String> },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("index {index} out of range ({len} trajectories)")]
    Range { index: usize, len: usize },

    #[error("mode error: {0}")]
    Mode(String),

    #[error("corrupt store: {0}")]
    Corrupt(String),

    #[error("cannot serialize value at `{path}`: {reason}")]
    Serialization { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Yaml(#[from] serde_yaml::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn registry(kind: &'static str, name: &str, available: impl IntoIterator<Item = String>) -> Self {
        Error::Registry {
            kind,
            name: name.to_string(),
            available: available.into_iter().collect(),
        }
    }
}
