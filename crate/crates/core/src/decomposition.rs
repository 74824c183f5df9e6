//! The model interface and the Kalikow identity evaluator.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sampling::RandomStream;
use crate::space::{Configuration, Neighborhood, NodeId, SubspaceGuard};
use crate::weights::{NeighborhoodDescriptor, WeightFamily};

/// Index set of a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum NodeSet {
    Finite(Vec<NodeId>),
    /// All of ℤ.
    Integers,
}

impl NodeSet {
    pub fn contains(&self, i: NodeId) -> bool {
        match self {
            NodeSet::Finite(nodes) => nodes.contains(&i),
            NodeSet::Integers => true,
        }
    }

    pub fn finite(&self) -> Option<&[NodeId]> {
        match self {
            NodeSet::Finite(nodes) => Some(nodes),
            NodeSet::Integers => None,
        }
    }
}

/// A model with a Kalikow decomposition
/// `φ^i(x) = Σ_v λ^i(v) φ^i_v(x)`, `Δ^i_v = λ^i(v) φ^i_v`.
///
/// Configurations passed to the evaluation methods are seen from time 0:
/// only points at negative times matter.
pub trait KalikowModel: Send + Sync {
    /// Preset name used in configs and reports.
    fn family_name(&self) -> &'static str;

    fn nodes(&self) -> NodeSet;

    fn guard(&self) -> SubspaceGuard;

    fn weights(&self) -> &WeightFamily;

    /// The generic intensity `φ^i(x)`.
    fn intensity(&self, i: NodeId, x: &Configuration) -> Result<f64>;

    /// `Δ^i_v(x)`.
    fn delta(&self, i: NodeId, v: &NeighborhoodDescriptor, x: &Configuration) -> Result<f64>;

    /// Global bound `Γ^i`, when the model has one.
    fn total_bound(&self, _i: NodeId) -> Option<f64> {
        None
    }

    /// Per-neighborhood bound `Γ^i_v`, when the model has one.
    fn component_bound(&self, _i: NodeId, _v: &NeighborhoodDescriptor) -> Option<f64> {
        None
    }

    /// A bound on every `φ^i_v` at `x` and at every shift of `x` by at most
    /// `horizon` time units without new points.
    fn local_bound(&self, i: NodeId, x: &Configuration, horizon: f64) -> Result<f64>;

    /// Checks that `x` lies in the subspace on which the decomposition holds.
    fn check_guard(&self, x: &Configuration) -> Result<()> {
        self.guard().check(x)
    }

    fn pmf(&self, i: NodeId, v: &NeighborhoodDescriptor) -> f64 {
        self.weights().pmf(i, v)
    }

    fn sample_neighborhood(&self, i: NodeId, rng: &mut RandomStream) -> NeighborhoodDescriptor {
        self.weights().sample(i, rng)
    }

    fn expand(&self, i: NodeId, v: &NeighborhoodDescriptor) -> Result<Neighborhood> {
        self.weights().expand(i, v)
    }

    /// `φ^i_v(x) = Δ^i_v(x) / λ^i(v)` with `0/0 = 0`.
    fn component_value(
        &self,
        i: NodeId,
        v: &NeighborhoodDescriptor,
        x: &Configuration,
    ) -> Result<f64> {
        let d = self.delta(i, v, x)?;
        if d == 0.0 {
            return Ok(0.0);
        }
        let p = self.pmf(i, v);
        if p == 0.0 {
            return Err(Error::Invariant(format!(
                "node {i}: Δ for {v} is {d} but its weight is zero"
            )));
        }
        Ok(d / p)
    }
}

/// Partial Kalikow sum over the first `n` enumerated neighborhoods.
pub fn evaluate_decomposition(
    model: &dyn KalikowModel,
    i: NodeId,
    x: &Configuration,
    n: usize,
) -> Result<f64> {
    model.check_guard(x)?;
    let weights = model.weights();
    let mut acc = 0.0;
    for v in weights.enumerate(i).take(n) {
        let p = weights.pmf(i, &v);
        acc += p * model.component_value(i, &v, x)?;
    }
    Ok(acc)
}

/// One row of a [`BoundedDecompositionTable`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub descriptor: NeighborhoodDescriptor,
    pub weight: f64,
    pub bound: Option<f64>,
}

/// Head of the decomposition of one node, with the mass left in the tail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundedDecompositionTable {
    pub node: NodeId,
    pub rows: Vec<TableRow>,
    pub tail_mass: f64,
    pub total_bound: Option<f64>,
}

/// Tabulates the first `n` neighborhoods of node `i`.
pub fn decomposition_table(model: &dyn KalikowModel, i: NodeId, n: usize) -> BoundedDecompositionTable {
    let weights = model.weights();
    let rows: Vec<TableRow> = weights
        .enumerate(i)
        .take(n)
        .map(|v| TableRow {
            weight: weights.pmf(i, &v),
            bound: model.component_bound(i, &v),
            descriptor: v,
        })
        .collect();
    BoundedDecompositionTable {
        node: i,
        tail_mass: weights.tail_mass(i, rows.len()),
        rows,
        total_bound: model.total_bound(i),
    }
}
