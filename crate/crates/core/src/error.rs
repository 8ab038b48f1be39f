use std::fmt;
use std::path::PathBuf;

/// Modelling hypothesis that a configuration can violate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// The communication graph has a spanning tree.
    A3,
    /// The measured signal has positive variance.
    A4,
    /// The lag-d autocorrelation exceeds the squared mean.
    A4Lagged,
    /// Every free node is reachable from every pinned node.
    PinningReachability,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assumption::A3 => write!(f, "A3 (spanning tree)"),
            Assumption::A4 => write!(f, "A4 (signal excitation)"),
            Assumption::A4Lagged => write!(f, "A4' (lagged excitation)"),
            Assumption::PinningReachability => write!(f, "pinning reachability"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("negative weight {weight} on arc {from}->{to}")]
    NegativeWeight { from: usize, to: usize, weight: f64 },

    #[error("node set must not be empty")]
    EmptyNodeSet,

    #[error("every node is fixed; nothing left to adjust")]
    AllNodesFixed,

    #[error("invalid signal model: {0}")]
    Signal(String),

    #[error("round {requested} requested after round {last}; autoregressive signals only move forward")]
    NonMonotoneRound { last: u64, requested: u64 },

    #[error("invalid step schedule: {0}")]
    Schedule(String),

    #[error("invalid sensor: {0}")]
    Sensor(String),

    #[error("assumption {assumption} violated: {detail}")]
    Assumption { assumption: Assumption, detail: String },

    #[error("expected a {expected}-dimensional null space, found {found} eigenvalues with |λ| < {tol:e}")]
    NullSpace { expected: usize, found: usize, tol: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("divergence at round {round}: node {node} has |g| = {value:e} above the guard {limit:e}")]
    Divergence { round: u64, node: usize, value: f64, limit: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
