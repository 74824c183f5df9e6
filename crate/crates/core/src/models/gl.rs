//! Galves–Löcherbach processes with saturation thresholds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::decomposition::{KalikowModel, NodeSet};
use crate::error::{Error, Result};
use crate::kernel::RateFunction;
use crate::space::{Configuration, Interval, NodeId, SubspaceGuard};
use crate::weights::{LevelLaw, NeighborhoodDescriptor, NestedFamily, Nesting, WeightFamily};

use super::age;

/// Weight `β^i_j` and saturation threshold `K^i_j` of `j` on `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub weight: f64,
    pub threshold: f64,
}

/// `φ^i(x) = ψ^i(Σ_j (β^i_j Z^j((-a^i(x), 0))) ∧ K^i_j)`.
///
/// Decomposed on `{∅} ∪ {v^i_k}` with `Δ^i_∅ = ψ^i(0)` and
/// `Δ^i_k = r^i_k − r^i_{k-1}`, where `r^i_k` counts the points of `ω^i_k`
/// on `[-(kδ ∧ a^i), 0)`.
#[derive(Debug, Clone)]
pub struct GalvesLocherbach {
    nodes: Vec<NodeId>,
    rate: RateFunction,
    couplings: BTreeMap<(NodeId, NodeId), Coupling>,
    delta: f64,
    nesting: Nesting,
    family: WeightFamily,
}

impl GalvesLocherbach {
    pub fn new(
        nodes: Vec<NodeId>,
        rate: RateFunction,
        couplings: BTreeMap<(NodeId, NodeId), Coupling>,
        delta: f64,
        nesting: Nesting,
        empty_weight: f64,
        law: LevelLaw,
    ) -> Result<Self> {
        rate.validate()?;
        if nodes.is_empty() {
            return Err(Error::param("nodes", "at least one node is required"));
        }
        if !matches!(nesting, Nesting::Explicit { .. }) {
            return Err(Error::param("nesting", "GL models need an explicit finite nesting"));
        }
        for (&(i, j), c) in &couplings {
            if !nodes.contains(&i) || !nodes.contains(&j) {
                return Err(Error::param(&format!("couplings[{i}][{j}]"), "unknown node"));
            }
            if !(c.weight.is_finite() && c.weight >= 0.0) {
                return Err(Error::param(&format!("beta[{i}][{j}]"), "must be finite and >= 0"));
            }
            if !(c.threshold.is_finite() && c.threshold >= 0.0) {
                return Err(Error::param(&format!("threshold[{i}][{j}]"), "must be finite and >= 0"));
            }
            if i == j && c.weight != 0.0 {
                return Err(Error::param(&format!("beta[{i}][{i}]"), "self weights must be 0"));
            }
        }
        if rate.at_zero() > 0.0 && empty_weight == 0.0 {
            return Err(Error::param(
                "empty_weight",
                "must be positive when the rate at zero drive is positive",
            ));
        }
        let family = WeightFamily::Nested(NestedFamily {
            delta,
            nesting: nesting.clone(),
            empty: empty_weight,
            law,
            per_node: BTreeMap::new(),
        });
        family.validate()?;
        for &i in &nodes {
            let Some(sat) = nesting.saturation(i) else {
                return Err(Error::param("nesting", format!("no sets for node {i}")));
            };
            for (&(_, j), c) in couplings.range((i, NodeId(i64::MIN))..=(i, NodeId(i64::MAX))) {
                if c.weight > 0.0 && c.threshold > 0.0 && !nesting.contains(i, sat, j) {
                    return Err(Error::param(
                        "nesting",
                        format!("node {j} acts on {i} but is missing from its sets"),
                    ));
                }
            }
        }
        Ok(GalvesLocherbach {
            nodes,
            rate,
            couplings,
            delta,
            nesting,
            family,
        })
    }

    fn check_node(&self, i: NodeId) -> Result<()> {
        if self.nodes.contains(&i) {
            Ok(())
        } else {
            Err(Error::UnknownNode(i))
        }
    }

    fn nested(&self) -> &NestedFamily {
        match &self.family {
            WeightFamily::Nested(f) => f,
            _ => unreachable!("GL models always use the nested family"),
        }
    }

    fn sources(&self, i: NodeId) -> impl Iterator<Item = (NodeId, Coupling)> + '_ {
        self.couplings
            .range((i, NodeId(i64::MIN))..=(i, NodeId(i64::MAX)))
            .map(|(&(_, j), c)| (j, *c))
    }

    /// Saturated drive over the nodes of level `k` (all nodes when `None`)
    /// on `[-(span ∧ a^i), 0)`.
    fn saturated_drive(&self, i: NodeId, x: &Configuration, k: Option<u32>, span: f64) -> f64 {
        let back = span.min(age(x, i));
        let iv = Interval {
            start: -back,
            end: 0.0,
        };
        self.sources(i)
            .filter(|(j, _)| k.is_none_or(|k| self.nesting.contains(i, k, *j)))
            .map(|(j, c)| (c.weight * x.count_in(j, &iv) as f64).min(c.threshold))
            .sum()
    }

    /// `r^i_k`, the rate restricted to level `k`.
    pub fn partial_rate(&self, i: NodeId, x: &Configuration, k: u32) -> Result<f64> {
        self.check_node(i)?;
        if k == 0 {
            return Ok(self.rate.at_zero());
        }
        Ok(self
            .rate
            .eval(self.saturated_drive(i, x, Some(k), k as f64 * self.delta)))
    }
}

impl KalikowModel for GalvesLocherbach {
    fn family_name(&self) -> &'static str {
        "gl"
    }

    fn nodes(&self) -> NodeSet {
        NodeSet::Finite(self.nodes.clone())
    }

    fn guard(&self) -> SubspaceGuard {
        SubspaceGuard::None
    }

    fn weights(&self) -> &WeightFamily {
        &self.family
    }

    fn intensity(&self, i: NodeId, x: &Configuration) -> Result<f64> {
        self.check_node(i)?;
        let a = age(x, i);
        if !x.covers(&Interval {
            start: -a,
            end: 0.0,
        }) {
            return Err(Error::InsufficientWindow { needed: a });
        }
        Ok(self.rate.eval(self.saturated_drive(i, x, None, f64::INFINITY)))
    }

    fn delta(&self, i: NodeId, v: &NeighborhoodDescriptor, x: &Configuration) -> Result<f64> {
        self.check_node(i)?;
        let k = match v {
            NeighborhoodDescriptor::Empty => return Ok(self.rate.at_zero()),
            NeighborhoodDescriptor::Nested { k } if *k >= 1 => *k,
            _ => {
                return Err(Error::UnknownDescriptor {
                    node: i,
                    descriptor: v.to_string(),
                })
            }
        };
        let span = (k as f64 * self.delta).min(age(x, i));
        if !x.covers(&Interval {
            start: -span,
            end: 0.0,
        }) {
            return Err(Error::InsufficientWindow { needed: span });
        }
        let hi = self.partial_rate(i, x, k)?;
        let lo = if k == 1 {
            self.rate.at_zero()
        } else {
            self.partial_rate(i, x, k - 1)?
        };
        Ok((hi - lo).max(0.0))
    }

    /// Bound valid for shifts up to `horizon`: only levels reaching back to
    /// a point of the past within that horizon can be nonzero.
    fn local_bound(&self, i: NodeId, x: &Configuration, horizon: f64) -> Result<f64> {
        self.check_node(i)?;
        let f = self.nested();
        let empty = if f.empty > 0.0 {
            self.rate.at_zero() / f.empty
        } else {
            0.0
        };
        let a = age(x, i);
        let earliest = self
            .sources(i)
            .filter(|(_, c)| c.weight > 0.0 && c.threshold > 0.0)
            .filter_map(|(j, _)| {
                x.points_in(j, &Interval { start: -a, end: 0.0 })
                    .first()
                    .copied()
            })
            .fold(f64::INFINITY, f64::min);
        if earliest == f64::INFINITY {
            return Ok(empty);
        }
        if !horizon.is_finite() {
            return Err(Error::Explosion {
                node: i,
                reason: "GL components have no bound over an unlimited horizon".into(),
            });
        }
        let sat = self.nesting.saturation(i).ok_or(Error::UnknownNode(i))?;
        let reach = ((horizon - earliest) / self.delta).ceil().max(0.0) as u64 + 1;
        let k_max = u32::try_from(reach.max(sat as u64)).map_err(|_| Error::Explosion {
            node: i,
            reason: "horizon spans too many levels".into(),
        })?;
        let total: f64 = self.sources(i).map(|(_, c)| c.threshold).sum();
        let jump = self.rate.eval(total) - self.rate.at_zero();
        let law = f.law(i);
        let mut min_weight = f64::INFINITY;
        for k in 1..=k_max {
            min_weight = min_weight.min((1.0 - f.empty) * law.pmf(k));
        }
        if jump > 0.0 && min_weight == 0.0 {
            return Err(Error::Explosion {
                node: i,
                reason: format!("a level below {k_max} has zero weight"),
            });
        }
        let levels = if jump > 0.0 { jump / min_weight } else { 0.0 };
        Ok(empty.max(levels))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::evaluate_decomposition;
    use approx::assert_relative_eq;

    fn model(beta: f64, k: f64) -> GalvesLocherbach {
        let nodes = vec![NodeId(1), NodeId(2)];
        let c = Coupling {
            weight: beta,
            threshold: k,
        };
        let couplings = BTreeMap::from([((NodeId(1), NodeId(2)), c), ((NodeId(2), NodeId(1)), c)]);
        GalvesLocherbach::new(
            nodes.clone(),
            RateFunction::identity(),
            couplings,
            0.5,
            Nesting::self_then_all(&nodes),
            0.0,
            LevelLaw::Geometric { ratio: 0.5 },
        )
        .unwrap()
    }

    fn x(points: &[(i64, f64)]) -> Configuration {
        Configuration::from_points(points.iter().map(|&(n, t)| (NodeId(n), t)), None).unwrap()
    }

    #[test]
    fn saturation_clamps_the_count() {
        let m = model(1.0, 2.0);
        let cfg = x(&[(2, -0.2), (2, -0.9), (2, -1.7)]);
        assert_eq!(m.intensity(NodeId(1), &cfg).unwrap(), 2.0);
    }

    #[test]
    fn age_resets_the_count() {
        let m = model(1.0, 5.0);
        let cfg = x(&[(2, -0.2), (1, -0.5), (2, -0.9), (2, -1.7)]);
        assert_eq!(m.intensity(NodeId(1), &cfg).unwrap(), 1.0);
    }

    #[test]
    fn telescoping_sums_to_partial_rates() {
        let m = model(0.7, 2.5);
        let cfg = x(&[(2, -0.2), (2, -0.9), (2, -1.7), (2, -2.3), (1, -3.1)]);
        let mut acc = 0.0;
        for k in 1..=12u32 {
            acc += m.delta(NodeId(1), &NeighborhoodDescriptor::Nested { k }, &cfg).unwrap();
            assert_relative_eq!(acc, m.partial_rate(NodeId(1), &cfg, k).unwrap(), max_relative = 1e-14);
        }
        let phi = m.intensity(NodeId(1), &cfg).unwrap();
        assert_relative_eq!(evaluate_decomposition(&m, NodeId(1), &cfg, 60).unwrap(), phi, max_relative = 1e-12);
    }

    #[test]
    fn horizon_bound_dominates_components() {
        let m = model(0.7, 2.5);
        let cfg = x(&[(2, -0.2), (2, -0.9), (2, -1.7)]);
        let horizon = 3.0;
        let bound = m.local_bound(NodeId(1), &cfg, horizon).unwrap();
        for step in 0..=30 {
            let shifted = crate::space::shift_to_origin(&cfg, step as f64 * 0.1);
            for v in m.weights().enumerate(NodeId(1)).take(40) {
                let c = m.component_value(NodeId(1), &v, &shifted).unwrap();
                assert!(c <= bound * (1.0 + 1e-12), "{v}: {c} > {bound}");
            }
        }
        assert!(m.local_bound(NodeId(1), &cfg, f64::INFINITY).is_err());
    }

    #[test]
    fn self_weight_is_rejected() {
        let nodes = vec![NodeId(0)];
        let c = Coupling {
            weight: 1.0,
            threshold: 1.0,
        };
        let r = GalvesLocherbach::new(
            nodes.clone(),
            RateFunction::identity(),
            BTreeMap::from([((NodeId(0), NodeId(0)), c)]),
            0.5,
            Nesting::self_then_all(&nodes),
            0.5,
            LevelLaw::Geometric { ratio: 0.5 },
        );
        assert!(r.is_err());
    }
}
