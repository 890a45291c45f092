use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("duplicate {kind} link id {id}")]
    DuplicateLinkId { kind: &'static str, id: u32 },

    #[error("{kind} link {id} is a self loop on node {node}")]
    SelfLoop {
        kind: &'static str,
        id: u32,
        node: usize,
    },

    #[error("data link {id} has noise power {sigma}, must be > 0")]
    BadSigma { id: u32, sigma: f64 },

    #[error("energy link {id} has efficiency {alpha}, must lie in (0, 1]")]
    BadAlpha { id: u32, alpha: f64 },

    #[error("{kind} link {id} references node {node}, network has {node_count} nodes")]
    NodeIndexOutOfRange {
        kind: &'static str,
        id: u32,
        node: usize,
        node_count: usize,
    },

    #[error("network must have at least one node")]
    EmptyNetwork,

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{what} must be finite and non-negative, got {value}")]
    NegativeValue { what: &'static str, value: f64 },

    #[error("Lambert W argument {0} is negative")]
    NegativeArgument(f64),

    #[error("power {0} is negative")]
    NegativePower(f64),

    #[error("link carries no flow, optimal power is defined as zero")]
    ZeroFlow,

    #[error("water level {0} must be positive")]
    BadWaterLevel(f64),

    #[error("capacity {capacity} does not exceed flow {flow}")]
    CapacityNotExceedingFlow { capacity: f64, flow: f64 },

    #[error("budget {budget} cannot carry the outgoing flows (needs more than {required}, deficit {deficit})")]
    InfeasibleBudget {
        budget: f64,
        required: f64,
        deficit: f64,
    },

    #[error(
        "no beneficial transfer: donor level {donor} >= alpha * receiver level {scaled_receiver}"
    )]
    NoBeneficialTransfer { donor: f64, scaled_receiver: f64 },

    #[error("instance is infeasible; energy deficits by node: {deficits:?}")]
    Infeasible { deficits: Vec<(usize, f64)> },

    #[error("node {node} is infeasible in slot {slot} (reduced arrival {value})")]
    InfeasibleSlot {
        node: usize,
        slot: usize,
        value: f64,
    },

    #[error("data topology contains a cycle through node {0}")]
    CycleDetected(usize),

    #[error("source node {0} has no path to any destination")]
    NoPathToDestination(usize),

    #[error("no feasible starting point: {0}")]
    NoFeasibleStart(String),

    #[error("grid of {points} points exceeds the cap of {cap}")]
    GridTooLarge { points: u128, cap: u128 },

    #[error("oracle could not find a feasible point")]
    NotFeasible,

    #[error("linear program failed: {0}")]
    Lp(String),
}
