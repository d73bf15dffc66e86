use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed linear program: {0}")]
    MalformedProgram(String),
    #[error("simplex exceeded {0} pivots")]
    IterationLimit(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("polytope is empty")]
    EmptySet,
    #[error("polytope is unbounded along coordinate {0}")]
    UnboundedDirection(usize),
    #[error("row {0} of the constraint matrix has a zero normal")]
    ZeroNormal(usize),
    #[error("continuity matrix is not full row rank (rank {rank} < {rows})")]
    RankDeficientContinuity { rank: usize, rows: usize },
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("torque is zero at check point {0}; gradient of |u| undefined")]
    ZeroTorqueAmbiguity(usize),
    #[error("seed violates the torque bound by {0} N·m")]
    InfeasibleSeed(f64),
    #[error("no free-fall seed was accepted")]
    NoSeedsAccepted,
    #[error("region library is empty")]
    EmptyLibrary,
    #[error("standard deviation of edge volumes is zero")]
    DegenerateCalibration,
    #[error("calibration needs at least {needed} edges, found {found}")]
    TooFewEdges { needed: usize, found: usize },
    #[error("initial state is not reachable from any region")]
    NoStartEdges,
    #[error("goal state is not reachable from any region")]
    NoGoalEdges,
    #[error("no walk from start to goal exists")]
    NoPathExists,
    #[error("candidate budget of {0} sequences exhausted")]
    BudgetExhausted(usize),
    #[error("unknown region id {0}")]
    UnknownRegionId(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
