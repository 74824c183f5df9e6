//! Kalikow decompositions of multivariate point-process intensities.
//!
//! The crate provides the configuration and neighborhood types, the built-in
//! model families with their decompositions, a forward simulator from empty
//! past, a perfect simulator of the stationary regime based on the clan of
//! ancestors, and branching-process tools predicting the cost of the latter.

pub mod analysis;
pub mod decomposition;
pub mod error;
pub mod forward;
pub mod kernel;
pub mod models;
pub mod perfect;
pub mod sampling;
pub mod series;
pub mod space;
pub mod stats;
pub mod weights;

pub use error::{Error, Result};
pub use space::{
    agrees_on, measure_with, neighborhood_measure, shift_to_origin, Configuration, Interval,
    Neighborhood, NodeId, Region, SubspaceGuard, TimePoint,
};
pub use decomposition::{
    decomposition_table, evaluate_decomposition, BoundedDecompositionTable, KalikowModel, NodeSet,
    TableRow,
};
pub use sampling::{RandomStream, RegionLedger};
pub use weights::{NeighborhoodDescriptor, WeightFamily};
pub use forward::{forward_simulate, ForwardOptions, ForwardRun, StopReason};
pub use perfect::{
    backward_clan, perfect_sample, perfect_sample_window, AncestorGraph, BackwardBudget, ClanPoint,
    Decision, PerfectError, PerfectRun, RootSummary, Sampler,
};
pub use analysis::{
    branching_matrix, branching_summary, expected_clan_size, log_laplace_fixed_point,
    subcriticality_gamma, weight_cost_curve, BranchingSummary, GammaScope, LogLaplaceState,
    OffspringLaws, Verdict,
};
