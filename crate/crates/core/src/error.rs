use thiserror::Error;

#[derive(Debug, Error)]
pub enum RostError {
    #[error("word index {word} out of range for vocabulary of size {vocab_size}")]
    WordOutOfRange { word: u32, vocab_size: usize },

    #[error("topic index {topic} out of range for {topics} topics")]
    TopicOutOfRange { topic: u32, topics: usize },

    #[error("observation at t={got} arrived out of order (expected t={expected})")]
    OutOfOrder { got: u32, expected: u32 },

    #[error("position t={pos_t} does not match observation timestep {t}")]
    TimestepMismatch { pos_t: u32, t: u32 },

    #[error("token {0} is already assigned")]
    AlreadyAssigned(usize),

    #[error("token {0} has no topic assigned")]
    Unassigned(usize),

    #[error("unknown token {0}")]
    UnknownToken(usize),

    #[error("timestep {t} out of range 1..={horizon}")]
    TimestepOutOfRange { t: u32, horizon: u32 },

    #[error("unknown timestep {0}")]
    UnknownTimestep(u32),

    #[error("cannot compute perplexity of an empty token set")]
    EmptyTokens,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown scheduler '{0}' (valid: now, uniform, agep, exp, uniform_now, agep_now, uniform_exp, agep_exp)")]
    UnknownScheduler(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = RostError> = std::result::Result<T, E>;
