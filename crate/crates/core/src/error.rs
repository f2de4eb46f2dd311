use thiserror::Error;

/// Errors produced by the library.
///
/// Variants carry the original node ids so callers can report them without
/// translating through follower/leader index maps.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("graph must have at least one node")]
    EmptyGraph,
    #[error("node id {node} out of range for a graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge ({i}, {j}) has non-positive noise variance {nu}")]
    NonPositiveVariance { i: usize, j: usize, nu: f64 },
    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("leader set is empty")]
    EmptyLeaderSet,
    #[error("node {0} appears twice in the leader set")]
    DuplicateLeader(usize),
    #[error("node {0} is already a leader")]
    AlreadyLeader(usize),
    #[error("target node {0} is a leader")]
    LeaderTarget(usize),
    #[error("grounded Laplacian is not positive definite")]
    NotPositiveDefinite,
    #[error("invalid leader budget k = {k} for {n} nodes")]
    InvalidK { k: usize, n: usize },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("random walk exceeded {0} steps")]
    WalkTimeout(u64),
    #[error("every failure sample left some follower without a path to a leader")]
    AllSamplesDisconnected,
    #[error("no threshold in the bisection range admitted a set within the leader budget")]
    InfeasibleBudget,
    #[error("graph dimension mismatch: expected {expected} nodes, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("brute force over {subsets} subsets exceeds the cap of {cap}")]
    BruteForceTooLarge { subsets: u128, cap: u128 },
    #[error("step size {dt} is unstable; must be below {limit}")]
    UnstableStep { dt: f64, limit: f64 },
    #[error("edge offsets are inconsistent: cycle residual {residual:e} on edge ({i}, {j})")]
    InconsistentOffsets { i: usize, j: usize, residual: f64 },
    #[error("could not generate a connected graph after {0} attempts")]
    CannotConnect(usize),
    #[error("unknown experiment '{0}'")]
    UnknownExperiment(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
