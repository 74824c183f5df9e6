//! Bookkeeping of the dominating Poisson processes already realized.
//!
//! Each node owns a sorted list of disjoint realized segments. A request
//! simulates fresh points only on the parts not yet covered, so no piece of
//! space-time is ever drawn twice within a run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{normalize_intervals, Interval, NodeId};

use super::{sample_exponential, sample_poisson_region, RandomStream};

/// A realized interval and the Poisson points drawn in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub interval: Interval,
    pub points: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NodeLedger {
    rate: f64,
    segments: Vec<Segment>,
}

/// Points returned by [`RegionLedger::realize_new`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Realization {
    /// Points drawn by this request.
    pub new: Vec<f64>,
    /// Points realized by earlier requests inside the requested region.
    pub old: Vec<f64>,
}

/// Realized regions per node, shared by one simulation run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionLedger {
    nodes: BTreeMap<NodeId, NodeLedger>,
    requests: u64,
}

impl NodeLedger {
    /// Index of the first segment whose end lies after `t`.
    fn first_ending_after(&self, t: f64) -> usize {
        self.segments.partition_point(|s| s.interval.end <= t)
    }

    fn segment_containing(&self, t: f64) -> Option<usize> {
        let k = self.first_ending_after(t);
        self.segments
            .get(k)
            .filter(|s| s.interval.start <= t)
            .map(|_| k)
    }

    fn uncovered(&self, iv: &Interval) -> Vec<Interval> {
        let mut gaps = Vec::new();
        let mut cursor = iv.start;
        for seg in &self.segments[self.first_ending_after(iv.start)..] {
            if seg.interval.start >= iv.end {
                break;
            }
            if seg.interval.start > cursor {
                gaps.push(Interval {
                    start: cursor,
                    end: seg.interval.start,
                });
            }
            cursor = cursor.max(seg.interval.end);
        }
        if cursor < iv.end {
            gaps.push(Interval {
                start: cursor,
                end: iv.end,
            });
        }
        gaps
    }

    fn points_in(&self, iv: &Interval) -> Vec<f64> {
        let mut out = Vec::new();
        for seg in &self.segments[self.first_ending_after(iv.start)..] {
            if seg.interval.start >= iv.end {
                break;
            }
            let lo = seg.points.partition_point(|&t| t < iv.start);
            let hi = seg.points.partition_point(|&t| t < iv.end);
            out.extend_from_slice(&seg.points[lo..hi]);
        }
        out
    }

    /// Inserts a segment lying in a gap and merges it with abutting neighbours.
    fn insert(&mut self, seg: Segment) {
        let k = self
            .segments
            .partition_point(|s| s.interval.start < seg.interval.start);
        self.segments.insert(k, seg);
        if k + 1 < self.segments.len()
            && self.segments[k].interval.end == self.segments[k + 1].interval.start
        {
            let next = self.segments.remove(k + 1);
            let cur = &mut self.segments[k];
            cur.interval.end = next.interval.end;
            cur.points.extend(next.points);
        }
        if k > 0 && self.segments[k - 1].interval.end == self.segments[k].interval.start {
            let cur = self.segments.remove(k);
            let prev = &mut self.segments[k - 1];
            prev.interval.end = cur.interval.end;
            prev.points.extend(cur.points);
        }
    }
}

impl RegionLedger {
    pub fn new() -> Self {
        RegionLedger::default()
    }

    /// Number of requests served so far; keys the child streams.
    pub fn request_count(&self) -> u64 {
        self.requests
    }

    fn node_mut(&mut self, node: NodeId, rate: f64) -> Result<&mut NodeLedger> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::InvalidRate(rate));
        }
        let entry = self.nodes.entry(node).or_insert(NodeLedger {
            rate,
            segments: Vec::new(),
        });
        if entry.rate != rate {
            return Err(Error::RateMismatch {
                node,
                existing: entry.rate,
                requested: rate,
            });
        }
        Ok(entry)
    }

    fn next_stream(&mut self, rng: &RandomStream) -> RandomStream {
        let child = rng.child(self.requests);
        self.requests += 1;
        child
    }

    /// Realizes the dominating process of `node` on `region`, drawing only on
    /// the parts never visited before.
    pub fn realize_new(
        &mut self,
        node: NodeId,
        region: &[Interval],
        rate: f64,
        rng: &RandomStream,
    ) -> Result<Realization> {
        let region = normalize_intervals(region.to_vec());
        if region.iter().any(|iv| !iv.len().is_finite()) {
            return Err(Error::InfiniteRegion);
        }
        self.node_mut(node, rate)?;
        let mut stream = self.next_stream(rng);
        let ledger = self.nodes.get_mut(&node).expect("node registered above");
        let mut out = Realization::default();
        for iv in &region {
            out.old.extend(ledger.points_in(iv));
            let gaps = ledger.uncovered(iv);
            let fresh = sample_poisson_region(&mut stream, rate, &gaps)?;
            for gap in gaps {
                let lo = fresh.partition_point(|&t| t < gap.start);
                let hi = fresh.partition_point(|&t| t < gap.end);
                ledger.insert(Segment {
                    interval: gap,
                    points: fresh[lo..hi].to_vec(),
                });
            }
            out.new.extend(fresh);
        }
        out.new.sort_by(f64::total_cmp);
        out.old.sort_by(f64::total_cmp);
        Ok(out)
    }

    /// First point of the dominating process of `node` strictly after `after`.
    ///
    /// Walks through already realized segments and draws exponential gaps in
    /// unvisited stretches. Everything between `after` and the returned point
    /// ends up registered as realized. Returns `+∞` when `rate` is zero.
    pub fn next_point_after(
        &mut self,
        node: NodeId,
        after: f64,
        rate: f64,
        rng: &RandomStream,
    ) -> Result<f64> {
        self.node_mut(node, rate)?;
        if rate == 0.0 {
            return Ok(f64::INFINITY);
        }
        let mut stream = self.next_stream(rng);
        let ledger = self.nodes.get_mut(&node).expect("node registered above");
        let mut p = after;
        loop {
            if let Some(k) = ledger.segment_containing(p) {
                let seg = &ledger.segments[k];
                let idx = seg.points.partition_point(|&t| t <= p);
                if let Some(&t) = seg.points.get(idx) {
                    return Ok(t);
                }
                p = seg.interval.end;
                continue;
            }
            let next_start = ledger
                .segments
                .get(ledger.first_ending_after(p))
                .map_or(f64::INFINITY, |s| s.interval.start);
            let mut c = p + sample_exponential(&mut stream, rate)?;
            if c <= p {
                c = p.next_up();
            }
            if c < next_start {
                ledger.insert(Segment {
                    interval: Interval {
                        start: p,
                        end: c.next_up(),
                    },
                    points: vec![c],
                });
                return Ok(c);
            }
            ledger.insert(Segment {
                interval: Interval {
                    start: p,
                    end: next_start,
                },
                points: Vec::new(),
            });
            p = next_start;
        }
    }

    /// Realized intervals of `node`, sorted and pairwise disjoint.
    pub fn coverage(&self, node: NodeId) -> Vec<Interval> {
        self.nodes
            .get(&node)
            .map(|l| l.segments.iter().map(|s| s.interval).collect())
            .unwrap_or_default()
    }

    pub fn segments(&self, node: NodeId) -> &[Segment] {
        self.nodes
            .get(&node)
            .map(|l| l.segments.as_slice())
            .unwrap_or(&[])
    }

    /// Realized points of `node` inside `iv`.
    pub fn points_in(&self, node: NodeId, iv: &Interval) -> Vec<f64> {
        self.nodes
            .get(&node)
            .map(|l| l.points_in(iv))
            .unwrap_or_default()
    }

    /// Whether `iv` has been fully realized for `node`.
    pub fn is_covered(&self, node: NodeId, iv: &Interval) -> bool {
        self.nodes
            .get(&node)
            .is_some_and(|l| l.uncovered(iv).is_empty())
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    /// Total number of realized points over all nodes.
    pub fn total_points(&self) -> usize {
        self.nodes
            .values()
            .flat_map(|l| l.segments.iter())
            .map(|s| s.points.len())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: f64, b: f64) -> Interval {
        Interval::new(a, b).unwrap()
    }

    #[test]
    fn fresh_request_is_all_new() {
        let mut l = RegionLedger::new();
        let rng = RandomStream::new(1);
        let r = l.realize_new(NodeId(0), &[iv(-1.0, 0.0)], 5.0, &rng).unwrap();
        assert!(r.old.is_empty());
        assert_eq!(l.coverage(NodeId(0)), vec![iv(-1.0, 0.0)]);
        assert_eq!(l.points_in(NodeId(0), &iv(-1.0, 0.0)), r.new);
    }

    #[test]
    fn repeated_request_is_idempotent() {
        let mut l = RegionLedger::new();
        let rng = RandomStream::new(2);
        let a = l.realize_new(NodeId(0), &[iv(-1.0, 0.0)], 5.0, &rng).unwrap();
        let b = l.realize_new(NodeId(0), &[iv(-1.0, 0.0)], 5.0, &rng).unwrap();
        assert!(b.new.is_empty());
        assert_eq!(a.new, b.old);
    }

    #[test]
    fn extension_draws_only_the_difference() {
        let mut l = RegionLedger::new();
        let rng = RandomStream::new(3);
        let a = l.realize_new(NodeId(0), &[iv(-1.0, 0.0)], 20.0, &rng).unwrap();
        let b = l.realize_new(NodeId(0), &[iv(-2.0, 0.0)], 20.0, &rng).unwrap();
        assert!(b.new.iter().all(|t| (-2.0..-1.0).contains(t)));
        assert_eq!(b.old, a.new);
        assert_eq!(l.coverage(NodeId(0)), vec![iv(-2.0, 0.0)]);
    }

    #[test]
    fn rate_mismatch_is_an_error() {
        let mut l = RegionLedger::new();
        let rng = RandomStream::new(4);
        l.realize_new(NodeId(0), &[iv(-1.0, 0.0)], 1.0, &rng).unwrap();
        assert!(matches!(
            l.realize_new(NodeId(0), &[iv(-3.0, -2.0)], 2.0, &rng),
            Err(Error::RateMismatch { .. })
        ));
    }

    #[test]
    fn gaps_between_segments_are_filled() {
        let mut l = RegionLedger::new();
        let rng = RandomStream::new(5);
        l.realize_new(NodeId(0), &[iv(0.0, 1.0), iv(2.0, 3.0)], 1.0, &rng)
            .unwrap();
        assert_eq!(l.coverage(NodeId(0)), vec![iv(0.0, 1.0), iv(2.0, 3.0)]);
        l.realize_new(NodeId(0), &[iv(0.5, 2.5)], 1.0, &rng).unwrap();
        assert_eq!(l.coverage(NodeId(0)), vec![iv(0.0, 3.0)]);
    }

    #[test]
    fn next_point_registers_empty_stretch() {
        let mut l = RegionLedger::new();
        let rng = RandomStream::new(6);
        let t = l.next_point_after(NodeId(0), 0.0, 2.0, &rng).unwrap();
        assert!(t > 0.0);
        assert_eq!(l.points_in(NodeId(0), &iv(0.0, t.next_up())), vec![t]);
        assert!(l.is_covered(NodeId(0), &iv(0.0, t)));
        let u = l.next_point_after(NodeId(0), t, 2.0, &rng).unwrap();
        assert!(u > t);
        assert_eq!(l.coverage(NodeId(0)).len(), 1);
    }

    #[test]
    fn next_point_walks_through_realized_points() {
        let mut l = RegionLedger::new();
        let rng = RandomStream::new(7);
        let r = l.realize_new(NodeId(0), &[iv(1.0, 5.0)], 3.0, &rng).unwrap();
        let mut p = 0.0;
        let mut seen = Vec::new();
        loop {
            p = l.next_point_after(NodeId(0), p, 3.0, &rng).unwrap();
            if p >= 5.0 {
                break;
            }
            seen.push(p);
        }
        let inside: Vec<f64> = seen.into_iter().filter(|t| *t >= 1.0).collect();
        assert_eq!(inside, r.new);
    }
}
