use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown token id {id} at position {position}")]
    UnknownToken { position: usize, id: u32 },

    #[error("chunk length {chunk_ms} ms is shorter than one frame ({frame_period_ms} ms)")]
    ChunkTooShort { chunk_ms: f64, frame_period_ms: f64 },

    #[error("beam is empty")]
    EmptyBeam,

    #[error("prefix length {len} exceeds the maximum of {max} output tokens")]
    PrefixTooLong { len: usize, max: usize },

    #[error("attention weights are not normalized (sum = {sum})")]
    UnnormalizedAttention { sum: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("chunk delivered out of order (frame {got}, expected {expected})")]
    OutOfOrderChunk { got: usize, expected: usize },

    #[error("session already finalized; no chunks accepted after flush")]
    SessionFinalized,

    #[error("word matching failed: {0}")]
    WordMatch(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
