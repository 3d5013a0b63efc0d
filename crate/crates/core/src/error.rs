use thiserror::Error;

/// Errors raised by the load-balancing processes and the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BalanceError {
    #[error("bin count must be at least 1")]
    NoBins,
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("probability vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("potential exponent {exponent} exceeds the limit {limit} (bin {bin})")]
    PotentialOverflow { bin: usize, exponent: f64, limit: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Errors raised while building or replaying schedules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("thread count must be at least 1")]
    NoThreads,
    #[error("stampede block size {block} must be in 1..={threads}")]
    BlockTooLarge { block: usize, threads: usize },
    #[error("operation {op} on thread {thread}: phase {phase:?} out of order")]
    PhaseOrder { op: u64, thread: usize, phase: &'static str },
    #[error("operation {op} uses thread {thread}, which already has operation {pending} pending")]
    ThreadBusy { op: u64, thread: usize, pending: u64 },
    #[error("event references thread {thread} but the configuration has {threads} threads")]
    UnknownThread { thread: usize, threads: usize },
    #[error(transparent)]
    Balance(#[from] BalanceError),
}

/// Errors raised by the live concurrent structures and their oracles.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StructureError {
    #[error("{what} must be at least 1")]
    NotPositive { what: &'static str },
    #[error("key with stamp {stamp} is not live")]
    UnknownKey { stamp: u64 },
    #[error("queue {queue} released stamp {next} after {prev}")]
    OrderViolation { queue: usize, prev: u64, next: u64 },
}
