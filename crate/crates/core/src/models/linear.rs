//! Linear Hawkes processes with the atomic decomposition.

use std::collections::BTreeMap;

use crate::decomposition::{KalikowModel, NodeSet};
use crate::error::{Error, Result};
use crate::space::{Configuration, NodeId, SubspaceGuard};
use crate::weights::{AtomicFamily, NeighborhoodDescriptor, WeightFamily};

use super::{atom_ratio_bound, ensure_history, kernel_drive, past_points, KernelMatrix};

/// `φ^i(x) = μ^i + Σ_j ∫ h^i_j(-s) dx^j_s`.
///
/// `Δ^i_∅ = μ^i` and `Δ^i_{w_{j,n}}` is the kernel mass of the points of `j`
/// in bin `n`.
#[derive(Debug, Clone)]
pub struct LinearHawkes {
    nodes: Vec<NodeId>,
    baseline: BTreeMap<NodeId, f64>,
    kernels: KernelMatrix,
    family: WeightFamily,
}

impl LinearHawkes {
    /// Builds the model with sources `π^i` uniform over the nodes `j` with a
    /// nonzero kernel `h^i_j`.
    pub fn new(
        baseline: BTreeMap<NodeId, f64>,
        kernels: KernelMatrix,
        epsilon: f64,
        empty_weight: f64,
        bin_ratio: f64,
    ) -> Result<Self> {
        let mut sources: BTreeMap<NodeId, Vec<(NodeId, f64)>> = BTreeMap::new();
        for (&(i, j), h) in &kernels {
            if !h.is_zero() {
                sources.entry(i).or_default().push((j, 0.0));
            }
        }
        for list in sources.values_mut() {
            let w = 1.0 / list.len() as f64;
            list.iter_mut().for_each(|e| e.1 = w);
        }
        Self::with_family(
            baseline,
            kernels,
            AtomicFamily {
                epsilon,
                empty: empty_weight,
                ratio: bin_ratio,
                sources,
            },
        )
    }

    pub fn with_family(
        baseline: BTreeMap<NodeId, f64>,
        kernels: KernelMatrix,
        family: AtomicFamily,
    ) -> Result<Self> {
        let nodes: Vec<NodeId> = baseline.keys().copied().collect();
        for (i, mu) in &baseline {
            if !(mu.is_finite() && *mu >= 0.0) {
                return Err(Error::param(&format!("mu[{i}]"), "must be finite and >= 0"));
            }
        }
        for (&(i, j), h) in &kernels {
            h.validate()?;
            if !baseline.contains_key(&i) || !baseline.contains_key(&j) {
                return Err(Error::param(
                    &format!("kernels[{i}][{j}]"),
                    "refers to a node without a baseline rate",
                ));
            }
        }
        let family = WeightFamily::Atomic(family);
        family.validate()?;
        let model = LinearHawkes {
            nodes,
            baseline,
            kernels,
            family,
        };
        model.check_weights_cover_terms()?;
        Ok(model)
    }

    fn atomic(&self) -> &AtomicFamily {
        match &self.family {
            WeightFamily::Atomic(f) => f,
            _ => unreachable!("linear models always use the atomic family"),
        }
    }

    /// A weight may vanish only where the matching term vanishes identically.
    fn check_weights_cover_terms(&self) -> Result<()> {
        let f = self.atomic();
        for &i in &self.nodes {
            let sources = f.sources.get(&i).map(Vec::as_slice).unwrap_or(&[]);
            let empty = if sources.is_empty() { 1.0 } else { f.empty };
            if self.baseline[&i] > 0.0 && empty == 0.0 {
                return Err(Error::param(
                    "empty_weight",
                    format!("node {i} has a positive baseline but zero weight on the empty set"),
                ));
            }
            for (&(t, j), h) in self.kernels.range((i, NodeId(i64::MIN))..=(i, NodeId(i64::MAX))) {
                debug_assert_eq!(t, i);
                if h.is_zero() {
                    continue;
                }
                let pi = sources.iter().find(|(s, _)| *s == j).map_or(0.0, |e| e.1);
                if pi == 0.0 || f.empty == 1.0 {
                    return Err(Error::param(
                        "sources",
                        format!("kernel {j} -> {i} is nonzero but its atoms have zero weight"),
                    ));
                }
                if f.ratio == 0.0 && h.support() > f.epsilon {
                    return Err(Error::param(
                        "bin_ratio",
                        format!("kernel {j} -> {i} reaches past the first bin, which needs a positive ratio"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn epsilon(&self) -> f64 {
        self.atomic().epsilon
    }

    pub fn baseline(&self, i: NodeId) -> Option<f64> {
        self.baseline.get(&i).copied()
    }

    fn check_node(&self, i: NodeId) -> Result<()> {
        if self.baseline.contains_key(&i) {
            Ok(())
        } else {
            Err(Error::UnknownNode(i))
        }
    }

    fn dependence_range(&self, i: NodeId) -> f64 {
        self.kernels
            .iter()
            .filter(|((t, _), _)| *t == i)
            .map(|(_, h)| h.support())
            .fold(0.0, f64::max)
    }
}

impl KalikowModel for LinearHawkes {
    fn family_name(&self) -> &'static str {
        "linear"
    }

    fn nodes(&self) -> NodeSet {
        NodeSet::Finite(self.nodes.clone())
    }

    fn guard(&self) -> SubspaceGuard {
        SubspaceGuard::SummableIntensity
    }

    fn weights(&self) -> &WeightFamily {
        &self.family
    }

    fn intensity(&self, i: NodeId, x: &Configuration) -> Result<f64> {
        self.check_node(i)?;
        ensure_history(x, self.dependence_range(i))?;
        let mut rate = self.baseline[&i];
        for (j, _) in x.iter_nodes() {
            if let Some(h) = self.kernels.get(&(i, j)) {
                rate += kernel_drive(h, past_points(x, j));
            }
        }
        Ok(rate)
    }

    fn delta(&self, i: NodeId, v: &NeighborhoodDescriptor, x: &Configuration) -> Result<f64> {
        self.check_node(i)?;
        let nb = self.family.expand(i, v)?;
        x.ensure_covers(nb.region())?;
        match v {
            NeighborhoodDescriptor::Empty => Ok(self.baseline[&i]),
            NeighborhoodDescriptor::Atom { node, .. } => {
                let Some(h) = self.kernels.get(&(i, *node)) else {
                    return Ok(0.0);
                };
                let (_, iv) = nb.pieces()[0];
                Ok(kernel_drive(h, x.points_in(*node, &iv)))
            }
            _ => unreachable!("expand accepted a foreign descriptor"),
        }
    }

    fn local_bound(&self, i: NodeId, x: &Configuration, _horizon: f64) -> Result<f64> {
        self.check_node(i)?;
        let f = self.atomic();
        let sources = f.sources.get(&i).map(Vec::as_slice).unwrap_or(&[]);
        let empty = if sources.is_empty() { 1.0 } else { f.empty };
        let mu = self.baseline[&i];
        let base = if mu > 0.0 { mu / empty } else { 0.0 };
        if sources.is_empty() {
            return Ok(base);
        }
        let atoms = atom_ratio_bound(x, i, sources, &self.kernels, f.epsilon, f.ratio)?;
        Ok(base.max(atoms / (1.0 - f.empty)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::evaluate_decomposition;
    use crate::kernel::Kernel;
    use approx::assert_relative_eq;

    fn one_node(mu: f64, scale: f64, rate: f64) -> LinearHawkes {
        let kernels = BTreeMap::from([((NodeId(1), NodeId(1)), Kernel::exponential(scale, rate).unwrap())]);
        LinearHawkes::new(BTreeMap::from([(NodeId(1), mu)]), kernels, 0.5, 0.5, 0.7).unwrap()
    }

    fn x(points: &[(i64, f64)]) -> Configuration {
        Configuration::from_points(points.iter().map(|&(n, t)| (NodeId(n), t)), None).unwrap()
    }

    #[test]
    fn empty_past_gives_baseline() {
        let m = one_node(0.5, 1.0, 1.0);
        assert_eq!(m.intensity(NodeId(1), &Configuration::new()).unwrap(), 0.5);
        assert_relative_eq!(
            evaluate_decomposition(&m, NodeId(1), &Configuration::new(), 1).unwrap(),
            0.5
        );
    }

    #[test]
    fn zero_kernel_decomposition() {
        let m = LinearHawkes::new(BTreeMap::from([(NodeId(0), 0.5)]), BTreeMap::new(), 0.5, 0.5, 0.5).unwrap();
        assert_eq!(evaluate_decomposition(&m, NodeId(0), &Configuration::new(), 3).unwrap(), 0.5);
        assert_eq!(m.local_bound(NodeId(0), &Configuration::new(), 1.0).unwrap(), 0.5);
    }

    #[test]
    fn atom_deltas() {
        let m = one_node(1.0, 1.0, 1.0);
        let cfg = x(&[(1, -0.3)]);
        let d1 = m
            .delta(NodeId(1), &NeighborhoodDescriptor::Atom { node: NodeId(1), bin: 1 }, &cfg)
            .unwrap();
        assert_relative_eq!(d1, (-0.3f64).exp());
        let d2 = m
            .delta(NodeId(1), &NeighborhoodDescriptor::Atom { node: NodeId(1), bin: 2 }, &cfg)
            .unwrap();
        assert_eq!(d2, 0.0);
    }

    #[test]
    fn partial_sums_converge_to_intensity() {
        let m = one_node(1.0, 0.5, 1.0);
        let cfg = x(&[(1, -0.3), (1, -1.7), (1, -4.2)]);
        let phi = m.intensity(NodeId(1), &cfg).unwrap();
        let approx = evaluate_decomposition(&m, NodeId(1), &cfg, 20).unwrap();
        assert_relative_eq!(phi, approx, max_relative = 1e-12);
    }

    #[test]
    fn local_bound_dominates_components_at_later_shifts() {
        let m = one_node(1.0, 0.5, 1.0);
        let cfg = x(&[(1, -0.3), (1, -0.35), (1, -1.7)]);
        let bound = m.local_bound(NodeId(1), &cfg, f64::INFINITY).unwrap();
        assert!(bound >= 1.0 / 0.5);
        for step in 0..200 {
            let shifted = crate::space::shift_to_origin(&cfg, step as f64 * 0.037);
            for v in m.weights().enumerate(NodeId(1)).take(60) {
                let c = m.component_value(NodeId(1), &v, &shifted).unwrap();
                assert!(c <= bound * (1.0 + 1e-12), "{v} {c} > {bound}");
            }
        }
    }

    #[test]
    fn slow_kernel_is_an_explosion() {
        let m = one_node(1.0, 0.5, 0.1);
        let cfg = x(&[(1, -0.3)]);
        assert!(matches!(
            m.local_bound(NodeId(1), &cfg, 1.0),
            Err(Error::Explosion { .. })
        ));
    }

    #[test]
    fn window_too_short_is_rejected() {
        let m = one_node(1.0, 0.5, 1.0);
        let cfg = Configuration::with_window(crate::space::Interval::new(-1.0, 0.0).unwrap());
        assert!(matches!(
            m.intensity(NodeId(1), &cfg),
            Err(Error::InsufficientWindow { .. })
        ));
    }
}
