use thiserror::Error;

/// Crate-wide error type. Variant names follow the failure modes of the
/// protocol layers: codec, planning, transforms, transcript handling, and
/// experiment configuration.
#[derive(Debug, Error)]
pub enum Error {
    /// A bit stream ended (or was corrupted) before a complete code word.
    #[error("malformed code: {0}")]
    MalformedCode(String),

    /// A value fell outside the representable range of a fixed-width code.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// A numeric argument violated its domain (nonpositive budget, noise, ...).
    #[error("domain error: {0}")]
    DomainError(String),

    /// An array had the wrong shape (non power-of-two samples, bad level width).
    #[error("shape error: {0}")]
    ShapeError(String),

    /// Transcript roles are inconsistent with the plan they are decoded under.
    #[error("role mismatch: {0}")]
    RoleMismatch(String),

    /// A decode stage received no strings to work with.
    #[error("empty transcript: {0}")]
    EmptyTranscript(String),

    /// An invalid experiment configuration.
    #[error("config error: {0}")]
    ConfigError(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
