//! Bounded models given directly by their components.
//!
//! Each node has a bound `Γ^i` and a rule for the cylindrical components
//! `φ^i_v`, so that `Δ^i_v = λ^i(v) φ^i_v` and `Γ^i_v = λ^i(v) Γ^i`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::decomposition::{KalikowModel, NodeSet};
use crate::error::{Error, Result};
use crate::space::{Configuration, NodeId, SubspaceGuard};
use crate::weights::{NeighborhoodDescriptor, WeightFamily};

use super::{bin_of, past_points};

/// How `φ^i_v` depends on the points inside `v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ComponentRule {
    /// `φ^i_v ≡ value`.
    Constant { value: f64 },
    /// `φ^i_v(x) = min(base + per_point · x(v), Γ^i)`.
    Excitation { base: f64, per_point: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeRule {
    pub bound: f64,
    pub component: ComponentRule,
}

impl NodeRule {
    fn value(&self, count: usize) -> f64 {
        match self.component {
            ComponentRule::Constant { value } => value,
            ComponentRule::Excitation { base, per_point } => {
                (base + per_point * count as f64).min(self.bound)
            }
        }
    }

    fn validate(&self, i: NodeId) -> Result<()> {
        if !(self.bound.is_finite() && self.bound > 0.0) {
            return Err(Error::param(&format!("bound[{i}]"), "must be finite and > 0"));
        }
        let ok = match self.component {
            ComponentRule::Constant { value } => (0.0..=self.bound).contains(&value),
            ComponentRule::Excitation { base, per_point } => {
                (0.0..=self.bound).contains(&base) && per_point.is_finite() && per_point >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(
                &format!("component[{i}]"),
                "values must be nonnegative and at most the bound",
            ))
        }
    }
}

/// See the module documentation. Only listed and atomic families are
/// supported, so that the intensity is an exact finite sum.
#[derive(Debug, Clone)]
pub struct TableModel {
    nodes: Vec<NodeId>,
    rules: BTreeMap<NodeId, NodeRule>,
    family: WeightFamily,
}

impl TableModel {
    pub fn new(rules: BTreeMap<NodeId, NodeRule>, family: WeightFamily) -> Result<Self> {
        if rules.is_empty() {
            return Err(Error::param("nodes", "at least one node is required"));
        }
        for (i, r) in &rules {
            r.validate(*i)?;
        }
        family.validate()?;
        match &family {
            WeightFamily::Listed(f) => {
                for i in rules.keys() {
                    if !f.entries.contains_key(i) {
                        return Err(Error::param("weights", format!("no neighborhoods for node {i}")));
                    }
                }
            }
            WeightFamily::Atomic(_) => {}
            _ => {
                return Err(Error::Unsupported(
                    "table models take listed or atomic families".into(),
                ))
            }
        }
        Ok(TableModel {
            nodes: rules.keys().copied().collect(),
            rules,
            family,
        })
    }

    /// One node with a constant component `value` under bound `bound` and
    /// the single neighborhood `∅`.
    pub fn constant(node: NodeId, value: f64, bound: f64) -> Result<Self> {
        use crate::weights::{ListedEntry, ListedFamily};
        let family = WeightFamily::Listed(ListedFamily {
            entries: BTreeMap::from([(
                node,
                vec![ListedEntry {
                    weight: 1.0,
                    neighborhood: crate::space::Neighborhood::empty(),
                }],
            )]),
        });
        TableModel::new(
            BTreeMap::from([(
                node,
                NodeRule {
                    bound,
                    component: ComponentRule::Constant { value },
                },
            )]),
            family,
        )
    }

    fn rule(&self, i: NodeId) -> Result<&NodeRule> {
        self.rules.get(&i).ok_or(Error::UnknownNode(i))
    }

    fn count(&self, i: NodeId, v: &NeighborhoodDescriptor, x: &Configuration) -> Result<usize> {
        let nb = self.family.expand(i, v)?;
        x.ensure_covers(nb.region())?;
        Ok(nb
            .pieces()
            .iter()
            .map(|(j, iv)| x.count_in(*j, iv))
            .sum())
    }
}

impl KalikowModel for TableModel {
    fn family_name(&self) -> &'static str {
        "table"
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
        let rule = self.rule(i)?;
        match &self.family {
            WeightFamily::Listed(_) => {
                let mut acc = 0.0;
                for v in self.family.enumerate(i) {
                    acc += self.delta(i, &v, x)?;
                }
                Ok(acc)
            }
            WeightFamily::Atomic(f) => {
                if let ComponentRule::Constant { value } = rule.component {
                    return Ok(value);
                }
                if x.window().is_some() {
                    return Err(Error::InsufficientWindow {
                        needed: f64::INFINITY,
                    });
                }
                // only occupied atoms differ from the empty-count value
                let idle = rule.value(0);
                let mut acc = idle;
                for (j, _) in f.sources.get(&i).map(Vec::as_slice).unwrap_or(&[]) {
                    let mut bins: Vec<u64> = past_points(x, *j).iter().map(|&s| bin_of(s, f.epsilon)).collect();
                    bins.dedup();
                    for bin in bins {
                        let v = NeighborhoodDescriptor::Atom {
                            node: *j,
                            bin: u32::try_from(bin).map_err(|_| Error::InsufficientWindow {
                                needed: bin as f64 * f.epsilon,
                            })?,
                        };
                        acc += self.family.pmf(i, &v) * (rule.value(self.count(i, &v, x)?) - idle);
                    }
                }
                Ok(acc)
            }
            _ => unreachable!("checked at construction"),
        }
    }

    fn delta(&self, i: NodeId, v: &NeighborhoodDescriptor, x: &Configuration) -> Result<f64> {
        let rule = self.rule(i)?;
        let n = self.count(i, v, x)?;
        Ok(self.family.pmf(i, v) * rule.value(n))
    }

    fn total_bound(&self, i: NodeId) -> Option<f64> {
        self.rules.get(&i).map(|r| r.bound)
    }

    fn component_bound(&self, i: NodeId, v: &NeighborhoodDescriptor) -> Option<f64> {
        self.rules.get(&i).map(|r| r.bound * self.family.pmf(i, v))
    }

    fn local_bound(&self, i: NodeId, _x: &Configuration, _horizon: f64) -> Result<f64> {
        Ok(self.rule(i)?.bound)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::evaluate_decomposition;
    use crate::weights::AtomicFamily;
    use approx::assert_relative_eq;

    fn atomic() -> TableModel {
        let family = WeightFamily::Atomic(AtomicFamily {
            epsilon: 0.5,
            empty: 0.5,
            ratio: 0.5,
            sources: BTreeMap::from([(NodeId(0), vec![(NodeId(0), 1.0)])]),
        });
        TableModel::new(
            BTreeMap::from([(
                NodeId(0),
                NodeRule {
                    bound: 1.0,
                    component: ComponentRule::Excitation {
                        base: 0.3,
                        per_point: 0.4,
                    },
                },
            )]),
            family,
        )
        .unwrap()
    }

    #[test]
    fn constant_model() {
        let m = TableModel::constant(NodeId(0), 1.0, 2.0).unwrap();
        let x = Configuration::new();
        assert_eq!(m.intensity(NodeId(0), &x).unwrap(), 1.0);
        assert_eq!(m.local_bound(NodeId(0), &x, 1.0).unwrap(), 2.0);
        assert_eq!(m.component_value(NodeId(0), &NeighborhoodDescriptor::Listed { index: 0 }, &x).unwrap(), 1.0);
    }

    #[test]
    fn atomic_intensity_matches_the_series() {
        let m = atomic();
        let x = Configuration::from_points(
            [(NodeId(0), -0.2), (NodeId(0), -0.3), (NodeId(0), -1.6)],
            None,
        )
        .unwrap();
        let phi = m.intensity(NodeId(0), &x).unwrap();
        let sum = evaluate_decomposition(&m, NodeId(0), &x, 80).unwrap();
        assert_relative_eq!(phi, sum, max_relative = 1e-12);
        assert!(phi <= 1.0);
    }

    #[test]
    fn component_above_bound_is_rejected() {
        let r = TableModel::constant(NodeId(0), 3.0, 2.0);
        assert!(r.is_err());
    }
}
