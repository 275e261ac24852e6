use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot parse rational {input:?}: {reason}")]
    ParseRational { input: String, reason: String },

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid network configuration: {}", join_violations(.0))]
    InvalidConfig(Vec<Violation>),

    #[error("enumeration of {count} items exceeds the cap of {cap}")]
    EnumerationCap { count: String, cap: u64 },

    #[error("memory must be non-negative, got {0}")]
    NegativeMemory(String),

    #[error("memory {memory} outside [0, {num_files}]")]
    MemoryOutOfRange { memory: String, num_files: usize },

    #[error("invalid tradeoff: {0}")]
    InvalidTradeoff(String),

    #[error("allocation does not match configuration: {0}")]
    AllocationMismatch(String),

    #[error("tradeoff for library {library} has {found} files, library holds {expected}")]
    TradeoffMismatch {
        library: usize,
        expected: usize,
        found: usize,
    },

    #[error("operation needs {expected} libraries, configuration has {found}")]
    WrongLibraryCount { expected: usize, found: usize },

    #[error("libraries hold different numbers of files; equal-N certification does not apply")]
    UnequalFileCounts,

    #[error("certification needs identical tradeoffs labeled exact: {0}")]
    NotCertifiable(String),

    #[error("file index {index} outside [1, {max}]")]
    FileIndexOutOfRange { index: usize, max: usize },

    #[error("libraries must be sorted by ascending file count")]
    UnsortedConfig,

    #[error("grid step must be positive")]
    InvalidGridStep,

    #[error("tradeoff kind {kind:?} is not available for N={num_files}, K={num_users}")]
    UnsupportedKind {
        kind: String,
        num_files: usize,
        num_users: usize,
    },

    #[error("base file size must be a multiple of {required} bits: {reason}")]
    Divisibility { required: String, reason: String },

    #[error("allocation {allocated} for library {library} exceeds its content {content}")]
    AllocationExceedsContent {
        library: usize,
        allocated: String,
        content: String,
    },

    #[error("demand does not match configuration: {0}")]
    DemandMismatch(String),

    #[error(
        "decode mismatch for demand #{demand_index} {demand:?}, user {user}, library {library}"
    )]
    DecodeMismatch {
        demand_index: usize,
        demand: Vec<Vec<usize>>,
        user: usize,
        library: usize,
    },

    #[error("simulation supports at most {max} users, configuration has {num_users}")]
    TooManyUsers { num_users: usize, max: usize },

    #[error("malformed dump: {0}")]
    Dump(String),
}

impl Error {
    /// Errors raised by a check failing rather than by bad input.
    pub fn is_verification_failure(&self) -> bool {
        matches!(self, Error::DecodeMismatch { .. })
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
