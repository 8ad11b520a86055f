use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Enumeration hit the element cap. Carries the partial per-radius sphere
    /// counts gathered before the cap so callers can report how far they got.
    #[error(
        "element cap {cap} exceeded while enumerating (completed spheres: {partial_spheres:?})"
    )]
    CapExceeded {
        cap: usize,
        partial_spheres: Vec<u64>,
    },

    /// Walk enumeration hit the walk cap; `depth` is the last fully enumerated length.
    #[error("walk cap {cap} exceeded at length {depth} ({walks_examined} walks examined)")]
    WalkCapExceeded {
        cap: u64,
        depth: u32,
        walks_examined: u64,
    },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
