use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("number of issues must lie in 1..=64, got {0}")]
    IssuesOutOfRange(u32),
    #[error("confidence threshold {theta} exceeds the number of issues {issues}")]
    ThresholdOutOfRange { issues: u32, theta: u32 },
    #[error("biased initial density must satisfy 0 <= rho < 2^-{issues}, got {rho}")]
    RhoOutOfRange { issues: u32, rho: String },
    #[error("pile size {j} outside 0..={issues}")]
    PileSizeOutOfRange { issues: u32, j: u32 },
    #[error("profile bits {bits:#x} do not fit in {issues} issues")]
    ProfileOutOfRange { issues: u32, bits: u64 },
    #[error("lattice needs at least 3 sites, got {0}")]
    LatticeTooSmall(usize),
    #[error("lattice has {0} sites, more than the engine supports")]
    LatticeTooLarge(usize),
    #[error("opinion vector has {got} entries, lattice has {expected} sites")]
    ConfigurationLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LedgerError {
    #[error("event at time {got} precedes the last observed time {last}")]
    OutOfOrder { last: f64, got: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LogError {
    #[error("active arrow at time {got} does not strictly follow {last}")]
    NonIncreasingTime { last: f64, got: f64 },
    #[error("arrow {from} -> {to} does not join nearest neighbours")]
    NotNeighbours { from: usize, to: usize },
}
