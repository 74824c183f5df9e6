//! Perfect simulation of the stationary regime.
//!
//! Every proposed point of the dominating Poisson process of rate `Γ^j`
//! carries a neighborhood drawn from `λ^j`. The backward pass collects the
//! clan of ancestors of a root by realizing the dominating process on the
//! drawn neighborhoods; the forward pass then decides every clan point in
//! time order. One [`RegionLedger`] and one [`DecisionBook`] are shared by
//! all roots of a run, so no region is drawn twice and every point keeps a
//! single decision.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomposition::KalikowModel;
use crate::error::Error;
use crate::sampling::{RandomStream, RegionLedger};
use crate::space::{Configuration, Interval, NodeId, Region};
use crate::weights::NeighborhoodDescriptor;

/// Slack allowed when comparing a component with its bound.
const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Undecided,
    Accepted,
    Rejected,
}

/// A point of the clan of ancestors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClanPoint {
    pub node: NodeId,
    pub time: f64,
    pub neighborhood: NeighborhoodDescriptor,
    pub generation: u32,
    pub decision: Decision,
}

/// The clan of ancestors of one root, built by [`Sampler::backward_clan`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AncestorGraph {
    /// `points[0]` is the root.
    pub points: Vec<ClanPoint>,
    /// Indices into `points`, one list per generation.
    pub generations: Vec<Vec<usize>>,
    /// Union of the drawn neighborhoods, shifted to their points.
    pub support: Region,
    /// Points decided by earlier clans that this clan's neighborhoods hit.
    pub reused: usize,
}

impl AncestorGraph {
    pub fn root(&self) -> (NodeId, f64) {
        (self.points[0].node, self.points[0].time)
    }

    /// Total clan size, the root included.
    pub fn size(&self) -> usize {
        self.points.len()
    }

    /// First `n` with an empty generation `n`.
    pub fn stopping_index(&self) -> usize {
        self.generations.len()
    }

    /// `T − inf{s : (j, s) in the support}`, or 0 for an empty support.
    pub fn lookback(&self) -> f64 {
        let (_, t) = self.root();
        self.support.earliest().map_or(0.0, |s| t - s)
    }

    pub fn root_decision(&self) -> Decision {
        self.points[0].decision
    }
}

/// Limits on the backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackwardBudget {
    pub max_generations: usize,
    pub max_points: usize,
}

impl Default for BackwardBudget {
    fn default() -> Self {
        BackwardBudget {
            max_generations: 10_000,
            max_points: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerfectError {
    /// The backward pass did not terminate within the budget.
    #[error("backward pass did not terminate: {reason}")]
    Budget {
        reason: String,
        graph: Box<AncestorGraph>,
    },
    #[error(transparent)]
    Model(#[from] Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TimeKey(f64);

impl Eq for TimeKey {}

impl PartialOrd for TimeKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TimeKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Decisions of every point decided so far in a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecisionBook {
    decided: BTreeMap<(NodeId, TimeKey), bool>,
}

impl DecisionBook {
    pub fn get(&self, node: NodeId, time: f64) -> Option<bool> {
        self.decided.get(&(node, TimeKey(time))).copied()
    }

    fn set(&mut self, node: NodeId, time: f64, accepted: bool) {
        self.decided.insert((node, TimeKey(time)), accepted);
    }

    pub fn len(&self) -> usize {
        self.decided.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decided.is_empty()
    }
}

/// Shared state of one perfect-simulation run.
pub struct Sampler<'m> {
    model: &'m dyn KalikowModel,
    ledger: RegionLedger,
    /// Keys the ledger's per-request streams.
    ledger_stream: RandomStream,
    /// Neighborhood draws and acceptance uniforms.
    marks: RandomStream,
    book: DecisionBook,
    budget: BackwardBudget,
}

impl<'m> Sampler<'m> {
    pub fn new(model: &'m dyn KalikowModel, rng: &RandomStream, budget: BackwardBudget) -> Self {
        Sampler {
            model,
            ledger: RegionLedger::new(),
            ledger_stream: rng.child(0),
            marks: rng.child(1),
            book: DecisionBook::default(),
            budget,
        }
    }

    pub fn ledger(&self) -> &RegionLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> RegionLedger {
        self.ledger
    }

    pub fn book(&self) -> &DecisionBook {
        &self.book
    }

    fn bound(&self, j: NodeId) -> Result<f64, Error> {
        let g = self.model.total_bound(j).ok_or(Error::MissingBound(j))?;
        if g.is_finite() && g >= 0.0 {
            Ok(g)
        } else {
            Err(Error::InvalidRate(g))
        }
    }

    /// Next point of the dominating process of `node` strictly after `after`.
    pub fn next_root(&mut self, node: NodeId, after: f64) -> Result<f64, Error> {
        let rate = self.bound(node)?;
        self.ledger
            .next_point_after(node, after, rate, &self.ledger_stream)
    }

    /// Builds the clan of ancestors of the dominating point `(i, t)`.
    pub fn backward_clan(&mut self, i: NodeId, t: f64) -> Result<AncestorGraph, PerfectError> {
        self.bound(i)?;
        let root = ClanPoint {
            node: i,
            time: t,
            neighborhood: self.model.sample_neighborhood(i, &mut self.marks),
            generation: 0,
            decision: Decision::Undecided,
        };
        let mut graph = AncestorGraph {
            points: vec![root],
            generations: vec![vec![0]],
            support: Region::empty(),
            reused: 0,
        };
        let mut in_clan: BTreeMap<(NodeId, TimeKey), usize> = BTreeMap::new();
        in_clan.insert((i, TimeKey(t)), 0);
        let mut pieces: Vec<(NodeId, Interval)> = Vec::new();
        loop {
            let current = graph.generations.last().expect("root generation").clone();
            let generation = graph.generations.len() as u32;
            let mut next = Vec::new();
            for idx in current {
                let (node, time, v) = {
                    let p = &graph.points[idx];
                    (p.node, p.time, p.neighborhood.clone())
                };
                let nb = self.model.expand(node, &v)?;
                for &(j, iv) in nb.pieces() {
                    let iv = iv.shift(time);
                    pieces.push((j, iv));
                    let rate = self.bound(j)?;
                    let got = self
                        .ledger
                        .realize_new(j, &[iv], rate, &self.ledger_stream)?;
                    let mut found = got.new;
                    found.extend(got.old);
                    found.sort_by(f64::total_cmp);
                    for s in found {
                        let key = (j, TimeKey(s));
                        if in_clan.contains_key(&key) {
                            continue;
                        }
                        if self.book.get(j, s).is_some() {
                            graph.reused += 1;
                            continue;
                        }
                        let neighborhood = self.model.sample_neighborhood(j, &mut self.marks);
                        in_clan.insert(key, graph.points.len());
                        next.push(graph.points.len());
                        graph.points.push(ClanPoint {
                            node: j,
                            time: s,
                            neighborhood,
                            generation,
                            decision: Decision::Undecided,
                        });
                    }
                }
                if graph.points.len() > self.budget.max_points {
                    graph.support = Region::new(pieces);
                    return Err(PerfectError::Budget {
                        reason: format!("more than {} clan points", self.budget.max_points),
                        graph: Box::new(graph),
                    });
                }
            }
            if next.is_empty() {
                break;
            }
            // expansion order within a generation: (time, node)
            next.sort_by(|&a, &b| {
                let (p, q) = (&graph.points[a], &graph.points[b]);
                p.time.total_cmp(&q.time).then(p.node.cmp(&q.node))
            });
            graph.generations.push(next);
            if graph.generations.len() > self.budget.max_generations {
                graph.support = Region::new(pieces);
                return Err(PerfectError::Budget {
                    reason: format!("more than {} generations", self.budget.max_generations),
                    graph: Box::new(graph),
                });
            }
        }
        graph.support = Region::new(pieces);
        Ok(graph)
    }

    /// Decides every point of `graph` in increasing time order and returns
    /// the decision of the root.
    pub fn forward_accept(&mut self, graph: &mut AncestorGraph) -> Result<Decision, Error> {
        let mut order: Vec<usize> = (0..graph.points.len()).collect();
        order.sort_by(|&a, &b| {
            let (p, q) = (&graph.points[a], &graph.points[b]);
            p.time.total_cmp(&q.time).then(p.node.cmp(&q.node))
        });
        for idx in order {
            let (j, s, v) = {
                let p = &graph.points[idx];
                (p.node, p.time, p.neighborhood.clone())
            };
            let nb = self.model.expand(j, &v)?;
            let mut x = Configuration::new();
            for &(k, iv) in nb.pieces() {
                let iv = iv.shift(s);
                if !self.ledger.is_covered(k, &iv) {
                    return Err(Error::Invariant(format!(
                        "neighborhood {k} x {iv} of ({j}, {s}) was never realized"
                    )));
                }
                for t in self.ledger.points_in(k, &iv) {
                    match self.book.get(k, t) {
                        Some(true) => x.insert(k, t - s)?,
                        Some(false) => {}
                        None => {
                            return Err(Error::Invariant(format!(
                                "point ({k}, {t}) is undecided when ({j}, {s}) is decided"
                            )))
                        }
                    }
                }
            }
            let gamma = self.bound(j)?;
            let phi = self.model.component_value(j, &v, &x)?;
            if phi > gamma * (1.0 + BOUND_SLACK) {
                return Err(Error::BoundViolated {
                    node: j,
                    time: s,
                    value: phi,
                    bound: gamma,
                });
            }
            let accepted = self.marks.uniform() * gamma < phi;
            self.book.set(j, s, accepted);
            graph.points[idx].decision = if accepted {
                Decision::Accepted
            } else {
                Decision::Rejected
            };
        }
        Ok(graph.root_decision())
    }
}

/// Backward pass for one root with a fresh ledger.
pub fn backward_clan(
    model: &dyn KalikowModel,
    i: NodeId,
    t: f64,
    rng: &RandomStream,
    budget: BackwardBudget,
) -> Result<AncestorGraph, PerfectError> {
    Sampler::new(model, rng, budget).backward_clan(i, t)
}

/// Statistics of one root of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootSummary {
    pub node: NodeId,
    pub time: f64,
    pub accepted: bool,
    /// Clan size including the root; 0 when the decision was reused.
    pub clan_size: usize,
    pub generations: usize,
    pub lookback: f64,
    /// The root had been decided by an earlier clan.
    pub reused: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerfectRun {
    /// Accepted points of the requested nodes inside the requested windows.
    pub points: Configuration,
    pub roots: Vec<RootSummary>,
    pub ledger: RegionLedger,
}

/// Stationary sample of node `i` on `[0, t_max]`.
pub fn perfect_sample(
    model: &dyn KalikowModel,
    i: NodeId,
    t_max: f64,
    rng: &RandomStream,
    budget: BackwardBudget,
) -> Result<PerfectRun, PerfectError> {
    if !(t_max.is_finite() && t_max >= 0.0) {
        return Err(Error::param("t_max", "must be finite and >= 0").into());
    }
    perfect_sample_window(
        model,
        &[(
            i,
            Interval {
                start: 0.0,
                end: t_max.next_up(),
            },
        )],
        rng,
        budget,
    )
}

/// Stationary sample on a finite set of `(node, interval)` pieces.
///
/// Roots of all pieces are processed in increasing time order with one
/// shared ledger and decision book.
pub fn perfect_sample_window(
    model: &dyn KalikowModel,
    window: &[(NodeId, Interval)],
    rng: &RandomStream,
    budget: BackwardBudget,
) -> Result<PerfectRun, PerfectError> {
    let region = Region::new(window.iter().copied());
    if region.pieces().iter().any(|(_, iv)| !iv.len().is_finite()) {
        return Err(Error::InfiniteRegion.into());
    }
    for &(j, _) in region.pieces() {
        if !model.nodes().contains(j) {
            return Err(Error::UnknownNode(j).into());
        }
    }
    let mut sampler = Sampler::new(model, rng, budget);
    let mut points = Configuration::new();
    let mut roots = Vec::new();
    // next candidate root of every piece
    let mut cursor: Vec<Option<f64>> = Vec::with_capacity(region.pieces().len());
    for &(j, iv) in region.pieces() {
        let t = sampler.next_root(j, iv.start)?;
        cursor.push((t < iv.end).then_some(t));
    }
    loop {
        let Some((k, t)) = cursor
            .iter()
            .enumerate()
            .filter_map(|(k, c)| c.map(|t| (k, t)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
        else {
            break;
        };
        let (j, iv) = region.pieces()[k];
        let summary = match sampler.book.get(j, t) {
            Some(accepted) => RootSummary {
                node: j,
                time: t,
                accepted,
                clan_size: 0,
                generations: 0,
                lookback: 0.0,
                reused: true,
            },
            None => {
                let mut graph = sampler.backward_clan(j, t)?;
                let decision = sampler.forward_accept(&mut graph)?;
                RootSummary {
                    node: j,
                    time: t,
                    accepted: decision == Decision::Accepted,
                    clan_size: graph.size(),
                    generations: graph.stopping_index(),
                    lookback: graph.lookback(),
                    reused: false,
                }
            }
        };
        if summary.accepted {
            points.insert(j, t)?;
        }
        roots.push(summary);
        let next = sampler.next_root(j, t)?;
        cursor[k] = (next < iv.end).then_some(next);
    }
    Ok(PerfectRun {
        points,
        roots,
        ledger: sampler.into_ledger(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ComponentRule, NodeRule, TableModel};
    use crate::space::Neighborhood;
    use crate::weights::{ListedEntry, ListedFamily, WeightFamily};

    fn listed(entries: Vec<(f64, Neighborhood)>, value: f64, bound: f64) -> TableModel {
        let family = WeightFamily::Listed(ListedFamily {
            entries: BTreeMap::from([(
                NodeId(0),
                entries
                    .into_iter()
                    .map(|(weight, neighborhood)| ListedEntry { weight, neighborhood })
                    .collect(),
            )]),
        });
        TableModel::new(
            BTreeMap::from([(
                NodeId(0),
                NodeRule {
                    bound,
                    component: ComponentRule::Constant { value },
                },
            )]),
            family,
        )
        .unwrap()
    }

    #[test]
    fn empty_neighborhood_gives_root_only() {
        let m = TableModel::constant(NodeId(0), 1.0, 2.0).unwrap();
        let g = backward_clan(&m, NodeId(0), 5.0, &RandomStream::new(1), BackwardBudget::default()).unwrap();
        assert_eq!(g.size(), 1);
        assert_eq!(g.stopping_index(), 1);
        assert_eq!(g.lookback(), 0.0);
    }

    #[test]
    fn generations_are_disjoint_and_earlier() {
        let v = Neighborhood::new([(NodeId(0), Interval::new(-1.0, 0.0).unwrap())]).unwrap();
        let m = listed(vec![(0.6, v), (0.4, Neighborhood::empty())], 0.5, 0.8);
        for seed in 0..50 {
            let g = backward_clan(&m, NodeId(0), 0.0, &RandomStream::new(seed), BackwardBudget::default()).unwrap();
            let mut seen = std::collections::BTreeSet::new();
            for (n, gen) in g.generations.iter().enumerate() {
                assert!(!gen.is_empty());
                for &idx in gen {
                    assert!(seen.insert(idx));
                    assert_eq!(g.points[idx].generation as usize, n);
                    assert!(g.points[idx].time <= 0.0);
                }
            }
            assert_eq!(seen.len(), g.size());
        }
    }

    #[test]
    fn saturated_components_accept_everything() {
        let v = Neighborhood::new([(NodeId(0), Interval::new(-1.0, 0.0).unwrap())]).unwrap();
        let m = listed(vec![(0.5, v), (0.5, Neighborhood::empty())], 0.8, 0.8);
        let mut sampler = Sampler::new(&m, &RandomStream::new(3), BackwardBudget::default());
        let mut g = sampler.backward_clan(NodeId(0), 0.0).unwrap();
        sampler.forward_accept(&mut g).unwrap();
        assert!(g.points.iter().all(|p| p.decision == Decision::Accepted));
    }

    #[test]
    fn budget_exhaustion_carries_the_graph() {
        let v = Neighborhood::new([(NodeId(0), Interval::new(-1.0, 0.0).unwrap())]).unwrap();
        let m = listed(vec![(1.0, v)], 10.0, 10.0);
        let budget = BackwardBudget {
            max_generations: 5,
            max_points: 1_000_000,
        };
        match backward_clan(&m, NodeId(0), 0.0, &RandomStream::new(2), budget) {
            Err(PerfectError::Budget { graph, .. }) => assert!(graph.generations.len() > 5),
            other => panic!("expected budget exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn empty_window_gives_empty_output() {
        let m = TableModel::constant(NodeId(0), 1.0, 2.0).unwrap();
        let run = perfect_sample_window(&m, &[], &RandomStream::new(1), BackwardBudget::default()).unwrap();
        assert!(run.points.is_empty());
    }

    #[test]
    fn single_window_matches_perfect_sample() {
        let v = Neighborhood::new([(NodeId(0), Interval::new(-1.0, 0.0).unwrap())]).unwrap();
        let m = listed(vec![(0.5, v), (0.5, Neighborhood::empty())], 0.4, 0.8);
        let rng = RandomStream::new(11);
        let a = perfect_sample(&m, NodeId(0), 50.0, &rng, BackwardBudget::default()).unwrap();
        let b = perfect_sample_window(
            &m,
            &[(NodeId(0), Interval::new(0.0, 50f64.next_up()).unwrap())],
            &rng,
            BackwardBudget::default(),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ledger_never_draws_twice() {
        let v = Neighborhood::new([(NodeId(0), Interval::new(-2.0, 0.0).unwrap())]).unwrap();
        let m = listed(vec![(0.3, v), (0.7, Neighborhood::empty())], 0.5, 1.0);
        let run = perfect_sample(&m, NodeId(0), 40.0, &RandomStream::new(8), BackwardBudget::default()).unwrap();
        let segs = run.ledger.segments(NodeId(0));
        for w in segs.windows(2) {
            assert!(w[0].interval.end < w[1].interval.start);
        }
        for s in segs {
            assert!(s.points.iter().all(|t| s.interval.contains(*t)));
        }
    }
}
