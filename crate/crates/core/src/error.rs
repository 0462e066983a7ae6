use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("hypercycle overflow")]
    HypercycleOverflow,

    #[error("invalid network: {0}")]
    Network(String),

    #[error("invalid stream {stream}: {reason}")]
    Stream { stream: String, reason: String },

    #[error("invalid mu-pattern `{0}`")]
    MuPattern(String),

    #[error("mu-pattern length {len} does not match k = {k}")]
    PatternLength { len: usize, k: usize },

    #[error("elevated traffic saturates link {link}: token rate {rate_bps:.0} bit/s >= link rate {link_rate} bit/s")]
    Saturated {
        link: String,
        rate_bps: f64,
        link_rate: u64,
    },

    #[error("FIFO consistency violated between {first} and {second} at port {port}")]
    FifoViolation {
        first: String,
        second: String,
        port: String,
    },

    #[error("transmission graph contains a cycle")]
    Cycle,

    #[error("node {0} is not reachable from the source")]
    Unreachable(usize),

    #[error("schedule infeasible: stream {stream} cannot meet its latency bound ({detail})")]
    Infeasible { stream: String, detail: String },

    #[error("malformed schedule: {0}")]
    MalformedSchedule(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
