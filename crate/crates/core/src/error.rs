//! Error type shared by every module of the crate.

use thiserror::Error;

use crate::space::NodeId;

/// Convenience alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong while building or evaluating a decomposition.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("no bound supplied for node {0}")]
    MissingBound(NodeId),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("neighborhood piece {node} x [{start}, {end}) is not covered by the configuration window")]
    NotCovered { node: NodeId, start: f64, end: f64 },

    #[error("configuration window must reach back to {needed} before 0 for this model")]
    InsufficientWindow { needed: f64 },

    #[error("configuration violates subspace {guard}: {detail}")]
    GuardViolation { guard: String, detail: String },

    #[error("rate must be positive and finite, got {0}")]
    InvalidRate(f64),

    #[error("region has infinite total length")]
    InfiniteRegion,

    #[error("rate mismatch on node {node}: realized at rate {existing}, requested {requested}")]
    RateMismatch {
        node: NodeId,
        existing: f64,
        requested: f64,
    },

    #[error("descriptor {descriptor} does not belong to the weight family of node {node}")]
    UnknownDescriptor { node: NodeId, descriptor: String },

    #[error("node {0} is not part of the model")]
    UnknownNode(NodeId),

    #[error("no finite local bound for node {node}: {reason}")]
    Explosion { node: NodeId, reason: String },

    #[error("component value {value} exceeds bound {bound} for node {node} at time {time}")]
    BoundViolated {
        node: NodeId,
        time: f64,
        value: f64,
        bound: f64,
    },

    #[error("non-summable Neumann series: max row sum {0} >= 1")]
    NonSummable(f64),

    #[error("divergent series in {family}: {reason}")]
    Divergent { family: String, reason: String },

    #[error("theta outside convergence ball after {iterations} iterations, last iterate {last:?}")]
    OutsideConvergenceBall { iterations: usize, last: Vec<f64> },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
