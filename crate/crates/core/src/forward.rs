//! Forward simulation from an empty past on a finite network.
//!
//! Each step bounds every component of every node by `Γ̃^i`, proposes the
//! next point at rate `Σ_i Γ̃^i`, draws a neighborhood for the chosen node
//! and keeps the point with probability `φ^i_v / Γ̃^i`.

use serde::{Deserialize, Serialize};

use crate::decomposition::KalikowModel;
use crate::error::{Error, Result};
use crate::sampling::{sample_exponential, RandomStream};
use crate::space::{shift_to_origin, Configuration, Interval, NodeId, SubspaceGuard};

/// Activity cap applied when no cap is requested.
pub const DEFAULT_ACTIVITY_CAP: usize = 1_000_000;

/// Slack allowed when comparing a component with its bound.
const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardOptions {
    pub t_max: f64,
    /// Largest number of accepted points.
    pub n_max: u64,
    pub guard: SubspaceGuard,
    /// Length of the window each bound must cover. A proposal falling past
    /// the window is discarded and the clock restarts at its end, which
    /// keeps horizon-limited bounds small.
    #[serde(default = "unlimited")]
    pub lookahead: f64,
}

fn unlimited() -> f64 {
    f64::INFINITY
}

impl ForwardOptions {
    pub fn new(t_max: f64, n_max: u64) -> Self {
        ForwardOptions {
            t_max,
            n_max,
            guard: SubspaceGuard::None,
            lookahead: f64::INFINITY,
        }
    }

    /// The requested guard plus the default activity cap when none was given.
    pub fn guards(&self) -> Vec<SubspaceGuard> {
        let mut out = Vec::new();
        if !matches!(self.guard, SubspaceGuard::None) {
            out.push(self.guard);
        }
        if !matches!(self.guard, SubspaceGuard::ActivityCap { .. }) {
            out.push(SubspaceGuard::ActivityCap {
                horizon: self.t_max,
                cap: DEFAULT_ACTIVITY_CAP,
            });
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StopReason {
    TimeReached,
    StepBudget { n_max: u64 },
    /// The path left the guard subspace, or no finite bound exists, at `time`.
    GuardExit { time: f64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardRun {
    /// Accepted points, window `[0, t_max)`.
    pub accepted: Configuration,
    pub stop_reason: StopReason,
    pub proposals: u64,
    pub t_max: f64,
    pub n_max: u64,
}

impl ForwardRun {
    pub fn accepted_count(&self) -> usize {
        self.accepted.len()
    }
}

/// Runs the forward algorithm on `nodes` from the empty past.
pub fn forward_simulate(
    model: &dyn KalikowModel,
    nodes: &[NodeId],
    options: &ForwardOptions,
    rng: &mut RandomStream,
) -> Result<ForwardRun> {
    if !(options.t_max.is_finite() && options.t_max >= 0.0) {
        return Err(Error::param("t_max", "must be finite and >= 0"));
    }
    if nodes.is_empty() {
        return Err(Error::param("nodes", "at least one node is required"));
    }
    if !(options.lookahead > 0.0) {
        return Err(Error::param("lookahead", "must be > 0"));
    }
    for &i in nodes {
        if !model.nodes().contains(i) {
            return Err(Error::UnknownNode(i));
        }
    }
    let guards = options.guards();
    let mut accepted = Configuration::new();
    let mut proposals = 0u64;
    let mut t: f64 = 0.0;
    let finish = |accepted: Configuration, stop_reason, proposals| {
        let mut accepted = accepted;
        accepted.set_window(Some(Interval {
            start: 0.0,
            end: options.t_max.next_up(),
        }));
        Ok(ForwardRun {
            accepted,
            stop_reason,
            proposals,
            t_max: options.t_max,
            n_max: options.n_max,
        })
    };
    if options.n_max == 0 {
        return finish(accepted, StopReason::StepBudget { n_max: 0 }, 0);
    }
    let mut bounds = vec![0.0; nodes.len()];
    loop {
        // seen just after t, so that a point accepted at t counts as past
        let past = shift_to_origin(&accepted, t.next_up());
        let horizon = options.lookahead.min(options.t_max - t);
        for (b, &i) in bounds.iter_mut().zip(nodes) {
            match model.local_bound(i, &past, horizon) {
                Ok(v) => *b = v,
                Err(Error::Explosion { node, reason }) => {
                    let reason = format!("no finite bound for node {node}: {reason}");
                    return finish(accepted, StopReason::GuardExit { time: t, reason }, proposals);
                }
                Err(e) => return Err(e),
            }
        }
        let total: f64 = bounds.iter().sum();
        if !total.is_finite() {
            let reason = "bounds overflowed".to_string();
            return finish(accepted, StopReason::GuardExit { time: t, reason }, proposals);
        }
        if total == 0.0 {
            return finish(accepted, StopReason::TimeReached, proposals);
        }
        let next = t + sample_exponential(rng, total)?;
        if next > t + horizon {
            if t + horizon >= options.t_max {
                return finish(accepted, StopReason::TimeReached, proposals);
            }
            t += horizon;
            continue;
        }
        t = next;
        proposals += 1;
        let mut u = rng.uniform() * total;
        let mut idx = nodes.len() - 1;
        for (k, b) in bounds.iter().enumerate() {
            if u < *b {
                idx = k;
                break;
            }
            u -= b;
        }
        let i = nodes[idx];
        let bound = bounds[idx];
        let v = model.sample_neighborhood(i, rng);
        let phi = model.component_value(i, &v, &shift_to_origin(&accepted, t))?;
        if phi > bound * (1.0 + BOUND_SLACK) {
            return Err(Error::BoundViolated {
                node: i,
                time: t,
                value: phi,
                bound,
            });
        }
        if rng.uniform() * bound >= phi {
            continue;
        }
        accepted.insert(i, t)?;
        // the path stops at τ; the point that leaves the subspace is not kept
        let mut exit = None;
        for g in &guards {
            if let Err(Error::GuardViolation { guard, detail }) = g.check(&accepted) {
                exit = Some(format!("{guard}: {detail}"));
                break;
            }
        }
        if exit.is_none() {
            match model.check_guard(&shift_to_origin(&accepted, t.next_up())) {
                Ok(()) => {}
                Err(Error::GuardViolation { guard, detail }) => exit = Some(format!("{guard}: {detail}")),
                Err(e) => return Err(e),
            }
        }
        if let Some(reason) = exit {
            accepted.remove(i, t);
            return finish(accepted, StopReason::GuardExit { time: t, reason }, proposals);
        }
        if accepted.len() as u64 >= options.n_max {
            return finish(accepted, StopReason::StepBudget { n_max: options.n_max }, proposals);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LinearHawkes, TableModel};
    use std::collections::BTreeMap;

    #[test]
    fn zero_intensity_accepts_nothing() {
        let m = LinearHawkes::new(BTreeMap::from([(NodeId(0), 0.0)]), BTreeMap::new(), 0.5, 0.5, 0.5).unwrap();
        let run = forward_simulate(&m, &[NodeId(0)], &ForwardOptions::new(10.0, 100), &mut RandomStream::new(1)).unwrap();
        assert!(run.accepted.is_empty());
        assert_eq!(run.stop_reason, StopReason::TimeReached);
    }

    #[test]
    fn zero_budget_stops_at_once() {
        let m = TableModel::constant(NodeId(0), 1.0, 1.0).unwrap();
        let run = forward_simulate(&m, &[NodeId(0)], &ForwardOptions::new(10.0, 0), &mut RandomStream::new(1)).unwrap();
        assert!(run.accepted.is_empty());
        assert_eq!(run.stop_reason, StopReason::StepBudget { n_max: 0 });
    }

    #[test]
    fn budget_counts_accepted_points() {
        let m = TableModel::constant(NodeId(0), 1.0, 1.0).unwrap();
        let run = forward_simulate(&m, &[NodeId(0)], &ForwardOptions::new(1e6, 5), &mut RandomStream::new(3)).unwrap();
        assert_eq!(run.accepted.len(), 5);
        assert_eq!(run.stop_reason, StopReason::StepBudget { n_max: 5 });
    }

    #[test]
    fn activity_cap_holds() {
        let m = TableModel::constant(NodeId(0), 1.0, 1.0).unwrap();
        let mut opts = ForwardOptions::new(100.0, 1000);
        opts.guard = SubspaceGuard::ActivityCap { horizon: 100.0, cap: 7 };
        let run = forward_simulate(&m, &[NodeId(0)], &opts, &mut RandomStream::new(4)).unwrap();
        assert!(matches!(run.stop_reason, StopReason::GuardExit { .. }));
        assert_eq!(run.accepted.points(NodeId(0)).len(), 7);
    }

    #[test]
    fn runs_are_reproducible() {
        let m = LinearHawkes::new(
            BTreeMap::from([(NodeId(0), 1.0)]),
            BTreeMap::from([((NodeId(0), NodeId(0)), crate::kernel::Kernel::exponential(0.5, 1.0).unwrap())]),
            0.5,
            0.5,
            0.7,
        )
        .unwrap();
        let opts = ForwardOptions::new(20.0, 1000);
        let a = forward_simulate(&m, &[NodeId(0)], &opts, &mut RandomStream::new(9)).unwrap();
        let b = forward_simulate(&m, &[NodeId(0)], &opts, &mut RandomStream::new(9)).unwrap();
        assert_eq!(a, b);
        assert!(!a.accepted.is_empty());
    }

    #[test]
    fn acceptance_ratio_matches_rate_over_bound() {
        let m = TableModel::constant(NodeId(0), 0.3, 1.0).unwrap();
        let run = forward_simulate(&m, &[NodeId(0)], &ForwardOptions::new(20_000.0, u64::MAX), &mut RandomStream::new(5)).unwrap();
        let n = run.proposals as f64;
        let p = run.accepted.len() as f64 / n;
        let sd = (0.3 * 0.7 / n).sqrt();
        assert!((p - 0.3).abs() < 3.0 * sd, "{p}");
    }

    #[test]
    fn lookahead_keeps_the_law() {
        // E N[0,2] = μT/(1-k) - μk(1-e^{-(1-k)bT})/((1-k)^2 b) with μ = b = 1, k = 1/2
        let exact = 4.0 - 2.0 * (1.0 - (-1.0f64).exp());
        let m = LinearHawkes::new(
            BTreeMap::from([(NodeId(0), 1.0)]),
            BTreeMap::from([((NodeId(0), NodeId(0)), crate::kernel::Kernel::exponential(0.5, 1.0).unwrap())]),
            0.5,
            0.5,
            0.7,
        )
        .unwrap();
        let mut opts = ForwardOptions::new(2.0, u64::MAX);
        opts.lookahead = 0.1;
        let root = RandomStream::new(21);
        let n = 8000;
        let total: usize = (0..n)
            .map(|k| forward_simulate(&m, &[NodeId(0)], &opts, &mut root.child(k)).unwrap().accepted.len())
            .sum();
        let mean = total as f64 / n as f64;
        assert!((mean - exact).abs() < 0.08, "{mean} vs {exact}");
        opts.lookahead = 0.0;
        assert!(forward_simulate(&m, &[NodeId(0)], &opts, &mut RandomStream::new(1)).is_err());
    }
}
