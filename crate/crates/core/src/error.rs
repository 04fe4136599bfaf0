use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("forward cache does not belong to this network state")]
    StaleCache,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("episode already finished; call reset first")]
    EpisodeFinished,
    #[error("episode is still running")]
    EpisodeRunning,
    #[error("episode buffer is empty")]
    EmptyEpisode,
    #[error("rollout extension requested for an episode that terminated naturally")]
    NaturalTermination,
    #[error("episodic memory is empty")]
    EmptyMemory,
    #[error("K = {k} outside 1..={size}")]
    KOutOfRange { k: usize, size: usize },
    #[error("capacity {capacity} exceeded")]
    CapacityExceeded { capacity: usize },
    #[error("replay buffer is empty")]
    EmptyBuffer,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("axis `{0}` is not sweepable")]
    NotSweepable(String),
    #[error("malformed binary data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
