//! Shared fixtures for the criterion benches.

use std::collections::BTreeMap;

use kalikow::kernel::{Kernel, RateFunction};
use kalikow::models::{AgeBounds, AgeHawkes, AgeKernels, AgeSpec, TableModel};
use kalikow::weights::Nesting;
use kalikow::{NodeId, NodeSet};

/// Rate 1 under the bound 2, no interaction.
pub fn constant() -> TableModel {
    TableModel::constant(NodeId(0), 1.0, 2.0).expect("valid constants")
}

/// Self-exciting node with `ψ(u) = 1 + u`, `h(t) = 0.5 e^{-4t}`.
pub fn age(delta: f64) -> AgeHawkes {
    AgeHawkes::new(AgeSpec {
        nodes: NodeSet::Finite(vec![NodeId(0)]),
        rate: RateFunction::Affine { offset: 1.0, slope: 1.0 },
        per_node_rate: BTreeMap::new(),
        kernels: AgeKernels::Explicit {
            kernels: BTreeMap::from([(
                (NodeId(0), NodeId(0)),
                Kernel::exponential(0.5, 4.0).expect("valid kernel"),
            )]),
        },
        delta,
        nesting: Nesting::self_then_all(&[NodeId(0)]),
        bounds: AgeBounds::GammaBar,
    })
    .expect("valid age model")
}

/// Ring of `n` nodes, each excited by itself and its two neighbours.
pub fn ring(n: i64, delta: f64) -> AgeHawkes {
    let nodes: Vec<NodeId> = (0..n).map(NodeId).collect();
    let mut kernels = BTreeMap::new();
    for i in 0..n {
        for d in [-1, 0, 1] {
            let j = (i + d).rem_euclid(n);
            kernels.insert((NodeId(i), NodeId(j)), Kernel::exponential(0.2, 4.0).expect("valid kernel"));
        }
    }
    AgeHawkes::new(AgeSpec {
        nodes: NodeSet::Finite(nodes.clone()),
        rate: RateFunction::Affine { offset: 1.0, slope: 1.0 },
        per_node_rate: BTreeMap::new(),
        kernels: AgeKernels::Explicit { kernels },
        delta,
        nesting: Nesting::self_then_all(&nodes),
        bounds: AgeBounds::GammaBar,
    })
    .expect("valid ring model")
}
