//! Configurations, intervals, neighborhoods and subspace guards.
//!
//! Every interval is half-open `[start, end)`. A [`Configuration`] is a
//! finite point set per node, optionally tagged with a window on which the
//! knowledge is known to be complete.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a node. Finite networks use `0..N`, lattice models use all of ℤ.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub i64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<i64> for NodeId {
    fn from(v: i64) -> Self {
        NodeId(v)
    }
}

/// A point in time.
pub type TimePoint = f64;

/// Half-open interval `[start, end)`. Either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if start.is_nan() || end.is_nan() || start >= end {
            return Err(Error::InvalidConfiguration(format!(
                "interval [{start}, {end}) is empty or malformed"
            )));
        }
        Ok(Interval { start, end })
    }

    /// The whole real line.
    pub fn everything() -> Self {
        Interval {
            start: f64::NEG_INFINITY,
            end: f64::INFINITY,
        }
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t < self.end
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start < end).then_some(Interval { start, end })
    }

    pub fn shift(&self, by: f64) -> Interval {
        Interval {
            start: self.start + by,
            end: self.end + by,
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Sorts and merges overlapping or abutting intervals.
pub fn normalize_intervals(mut ivs: Vec<Interval>) -> Vec<Interval> {
    ivs.retain(|iv| iv.start < iv.end);
    ivs.sort_by(|a, b| a.start.total_cmp(&b.start));
    let mut out: Vec<Interval> = Vec::with_capacity(ivs.len());
    for iv in ivs {
        match out.last_mut() {
            Some(last) if iv.start <= last.end => last.end = last.end.max(iv.end),
            _ => out.push(iv),
        }
    }
    out
}

/// A finite union of `(node, interval)` pieces in normal form: sorted by node
/// then start, with disjoint, non-abutting intervals per node.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pieces: Vec<(NodeId, Interval)>,
}

impl Region {
    pub fn new(pieces: impl IntoIterator<Item = (NodeId, Interval)>) -> Self {
        let mut by_node: BTreeMap<NodeId, Vec<Interval>> = BTreeMap::new();
        for (node, iv) in pieces {
            by_node.entry(node).or_default().push(iv);
        }
        let pieces = by_node
            .into_iter()
            .flat_map(|(node, ivs)| normalize_intervals(ivs).into_iter().map(move |iv| (node, iv)))
            .collect();
        Region { pieces }
    }

    pub fn empty() -> Self {
        Region::default()
    }

    pub fn pieces(&self) -> &[(NodeId, Interval)] {
        &self.pieces
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn shift(&self, by: f64) -> Region {
        Region {
            pieces: self.pieces.iter().map(|(n, iv)| (*n, iv.shift(by))).collect(),
        }
    }

    /// Smallest start over all pieces.
    pub fn earliest(&self) -> Option<f64> {
        self.pieces.iter().map(|(_, iv)| iv.start).reduce(f64::min)
    }

    pub fn contains(&self, node: NodeId, t: f64) -> bool {
        self.pieces.iter().any(|(n, iv)| *n == node && iv.contains(t))
    }
}

/// A neighborhood: a region living strictly in the past, `end <= 0`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Neighborhood {
    region: Region,
}

impl Neighborhood {
    pub fn new(pieces: impl IntoIterator<Item = (NodeId, Interval)>) -> Result<Self> {
        let pieces: Vec<_> = pieces.into_iter().collect();
        for (node, iv) in &pieces {
            if !(iv.start < iv.end) || iv.end > 0.0 || iv.start.is_nan() {
                return Err(Error::InvalidConfiguration(format!(
                    "neighborhood piece {node} x {iv} must satisfy a < b <= 0"
                )));
            }
        }
        Ok(Neighborhood {
            region: Region::new(pieces),
        })
    }

    pub fn empty() -> Self {
        Neighborhood::default()
    }

    pub fn pieces(&self) -> &[(NodeId, Interval)] {
        self.region.pieces()
    }

    pub fn is_empty(&self) -> bool {
        self.region.is_empty()
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    /// The neighborhood translated to time `t`, i.e. `v` seen from a point at `t`.
    pub fn shifted(&self, t: f64) -> Region {
        self.region.shift(t)
    }
}

/// Finite realized point set, per node strictly increasing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    points: BTreeMap<NodeId, Vec<f64>>,
    window: Option<Interval>,
}

impl Configuration {
    /// An empty configuration whose knowledge is complete everywhere.
    pub fn new() -> Self {
        Configuration::default()
    }

    /// An empty configuration known to be complete on `window` only.
    pub fn with_window(window: Interval) -> Self {
        Configuration {
            points: BTreeMap::new(),
            window: Some(window),
        }
    }

    /// Builds and validates a configuration from `(node, time)` pairs in any order.
    pub fn from_points(
        points: impl IntoIterator<Item = (NodeId, f64)>,
        window: Option<Interval>,
    ) -> Result<Self> {
        let mut map: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
        for (node, t) in points {
            map.entry(node).or_default().push(t);
        }
        for ts in map.values_mut() {
            ts.sort_by(f64::total_cmp);
        }
        let cfg = Configuration { points: map, window };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every structural invariant, including cross-node time collisions.
    pub fn validate(&self) -> Result<()> {
        let mut all = Vec::with_capacity(self.len());
        for (node, ts) in &self.points {
            for w in ts.windows(2) {
                if !(w[0] < w[1]) {
                    return Err(Error::InvalidConfiguration(format!(
                        "node {node}: times {} and {} are not strictly increasing",
                        w[0], w[1]
                    )));
                }
            }
            for &t in ts {
                if !t.is_finite() {
                    return Err(Error::InvalidConfiguration(format!(
                        "node {node}: non-finite time {t}"
                    )));
                }
                if let Some(w) = &self.window {
                    if !w.contains(t) {
                        return Err(Error::InvalidConfiguration(format!(
                            "node {node}: time {t} outside window {w}"
                        )));
                    }
                }
                all.push(t);
            }
        }
        all.sort_by(f64::total_cmp);
        if let Some(w) = all.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfiguration(format!(
                "two nodes share the time {}",
                w[0]
            )));
        }
        Ok(())
    }

    pub fn window(&self) -> Option<Interval> {
        self.window
    }

    pub fn set_window(&mut self, window: Option<Interval>) {
        self.window = window;
    }

    /// Inserts a point, keeping the node's times sorted.
    pub fn insert(&mut self, node: NodeId, t: f64) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::InvalidConfiguration(format!("non-finite time {t}")));
        }
        if let Some(w) = &self.window {
            if !w.contains(t) {
                return Err(Error::InvalidConfiguration(format!(
                    "time {t} outside window {w}"
                )));
            }
        }
        let ts = self.points.entry(node).or_default();
        let idx = ts.partition_point(|&s| s < t);
        if ts.get(idx) == Some(&t) {
            return Err(Error::InvalidConfiguration(format!(
                "duplicate point ({node}, {t})"
            )));
        }
        ts.insert(idx, t);
        Ok(())
    }

    /// Removes a point; returns whether it was present.
    pub fn remove(&mut self, node: NodeId, t: f64) -> bool {
        let Some(ts) = self.points.get_mut(&node) else {
            return false;
        };
        let idx = ts.partition_point(|&s| s < t);
        if ts.get(idx) == Some(&t) {
            ts.remove(idx);
            true
        } else {
            false
        }
    }

    /// All times of `node`, sorted.
    pub fn points(&self, node: NodeId) -> &[f64] {
        self.points.get(&node).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Nodes carrying at least one point.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.points
            .iter()
            .filter(|(_, ts)| !ts.is_empty())
            .map(|(n, _)| *n)
    }

    /// Iterates `(node, times)` for nodes carrying points.
    pub fn iter_nodes(&self) -> impl Iterator<Item = (NodeId, &[f64])> + '_ {
        self.points
            .iter()
            .filter(|(_, ts)| !ts.is_empty())
            .map(|(n, ts)| (*n, ts.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.points.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All points as `(time, node)`, sorted by time then node.
    pub fn sorted_points(&self) -> Vec<(f64, NodeId)> {
        let mut out: Vec<(f64, NodeId)> = self
            .points
            .iter()
            .flat_map(|(n, ts)| ts.iter().map(move |&t| (t, *n)))
            .collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }

    /// Times of `node` lying in `iv`.
    pub fn points_in(&self, node: NodeId, iv: &Interval) -> &[f64] {
        let ts = self.points(node);
        let lo = ts.partition_point(|&s| s < iv.start);
        let hi = ts.partition_point(|&s| s < iv.end);
        &ts[lo..hi]
    }

    pub fn count_in(&self, node: NodeId, iv: &Interval) -> usize {
        self.points_in(node, iv).len()
    }

    /// Most recent point of `node` strictly before `t`.
    pub fn last_before(&self, node: NodeId, t: f64) -> Option<f64> {
        let ts = self.points(node);
        let idx = ts.partition_point(|&s| s < t);
        idx.checked_sub(1).map(|k| ts[k])
    }

    /// Whether the window guarantees complete knowledge on `iv`.
    pub fn covers(&self, iv: &Interval) -> bool {
        self.window.is_none_or(|w| w.contains_interval(iv))
    }

    /// Errors unless every piece of `region` lies inside the window.
    pub fn ensure_covers(&self, region: &Region) -> Result<()> {
        for (node, iv) in region.pieces() {
            if !self.covers(iv) {
                return Err(Error::NotCovered {
                    node: *node,
                    start: iv.start,
                    end: iv.end,
                });
            }
        }
        Ok(())
    }

    /// Restriction to `region`. The result carries no window.
    pub fn restrict(&self, region: &Region) -> Configuration {
        let mut points: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
        for (node, iv) in region.pieces() {
            let ts = self.points_in(*node, iv);
            if !ts.is_empty() {
                points.entry(*node).or_default().extend_from_slice(ts);
            }
        }
        Configuration {
            points,
            window: None,
        }
    }
}

/// Maps every point `s < t` to `s - t` and drops points at or after `t`.
pub fn shift_to_origin(x: &Configuration, t: f64) -> Configuration {
    let points = x
        .points
        .iter()
        .filter_map(|(n, ts)| {
            let kept: Vec<f64> = ts.iter().take_while(|&&s| s < t).map(|&s| s - t).collect();
            (!kept.is_empty()).then_some((*n, kept))
        })
        .collect();
    let window = x.window.and_then(|w| {
        let end = w.end.min(t);
        (w.start < end).then_some(Interval {
            start: w.start - t,
            end: end - t,
        })
    });
    Configuration { points, window }
}

/// `P(v) = Σ Γ^j · length` over the pieces of `v`.
pub fn neighborhood_measure(v: &Neighborhood, bounds: &BTreeMap<NodeId, f64>) -> Result<f64> {
    measure_with(v.region(), |j| bounds.get(&j).copied())
}

/// Same as [`neighborhood_measure`], with bounds given by a lookup function.
pub fn measure_with(region: &Region, bound: impl Fn(NodeId) -> Option<f64>) -> Result<f64> {
    region.pieces().iter().try_fold(0.0, |acc, (node, iv)| {
        let g = bound(*node).ok_or(Error::MissingBound(*node))?;
        Ok(acc + g * iv.len())
    })
}

/// True iff `x` and `y` carry the same points inside `v`.
pub fn agrees_on(x: &Configuration, y: &Configuration, v: &Neighborhood) -> Result<bool> {
    x.ensure_covers(v.region())?;
    y.ensure_covers(v.region())?;
    Ok(v
        .pieces()
        .iter()
        .all(|(node, iv)| x.points_in(*node, iv) == y.points_in(*node, iv)))
}

/// Subspaces of the configuration space on which a decomposition holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SubspaceGuard {
    None,
    /// All same-node gaps exceed `delta`.
    RefractoryGap { delta: f64 },
    /// At most `cap` points per node on `[0, horizon]`.
    ActivityCap { horizon: f64, cap: usize },
    /// Total drive of every node stays below `cap`. Checked by the model.
    DriveCap { cap: f64 },
    /// Intensities are finite. Checked by the model.
    SummableIntensity,
}

impl SubspaceGuard {
    pub fn name(&self) -> String {
        match self {
            SubspaceGuard::None => "none".into(),
            SubspaceGuard::RefractoryGap { delta } => format!("refractory-gap(delta={delta})"),
            SubspaceGuard::ActivityCap { horizon, cap } => {
                format!("activity-cap(T={horizon}, K={cap})")
            }
            SubspaceGuard::DriveCap { cap } => format!("drive-cap(K={cap})"),
            SubspaceGuard::SummableIntensity => "summable-intensity".into(),
        }
    }

    /// Checks the purely structural variants. `DriveCap` and
    /// `SummableIntensity` depend on model parameters and pass here.
    pub fn check(&self, x: &Configuration) -> Result<()> {
        match *self {
            SubspaceGuard::RefractoryGap { delta } => {
                for (node, ts) in x.iter_nodes() {
                    if let Some(w) = ts.windows(2).find(|w| w[1] - w[0] <= delta) {
                        return Err(self.violation(format!(
                            "node {node} has points {} and {} closer than {delta}",
                            w[0], w[1]
                        )));
                    }
                }
                Ok(())
            }
            SubspaceGuard::ActivityCap { horizon, cap } => {
                let iv = Interval {
                    start: 0.0,
                    end: horizon.next_up(),
                };
                for (node, _) in x.iter_nodes() {
                    let n = x.count_in(node, &iv);
                    if n > cap {
                        return Err(self.violation(format!(
                            "node {node} has {n} points on [0, {horizon}]"
                        )));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn violation(&self, detail: String) -> Error {
        Error::GuardViolation {
            guard: self.name(),
            detail,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: f64, b: f64) -> Interval {
        Interval::new(a, b).unwrap()
    }

    #[test]
    fn measure_of_empty_is_zero() {
        let b = BTreeMap::from([(NodeId(1), 5.0)]);
        assert_eq!(neighborhood_measure(&Neighborhood::empty(), &b).unwrap(), 0.0);
    }

    #[test]
    fn measure_examples() {
        let v = Neighborhood::new([(NodeId(3), iv(-1.0, -0.5))]).unwrap();
        let b = BTreeMap::from([(NodeId(3), 2.0)]);
        assert_eq!(neighborhood_measure(&v, &b).unwrap(), 1.0);

        let v = Neighborhood::new([(NodeId(1), iv(-2.0, -1.0)), (NodeId(2), iv(-1.0, 0.0))]).unwrap();
        let b = BTreeMap::from([(NodeId(1), 1.0), (NodeId(2), 3.0)]);
        assert_eq!(neighborhood_measure(&v, &b).unwrap(), 4.0);
    }

    #[test]
    fn measure_missing_bound_names_node() {
        let v = Neighborhood::new([(NodeId(7), iv(-1.0, 0.0))]).unwrap();
        let err = neighborhood_measure(&v, &BTreeMap::new()).unwrap_err();
        assert_eq!(err, Error::MissingBound(NodeId(7)));
        assert!(err.to_string().contains('7'));
    }

    #[test]
    fn neighborhood_rejects_future_pieces() {
        assert!(Neighborhood::new([(NodeId(0), iv(-1.0, 0.5))]).is_err());
    }

    #[test]
    fn neighborhood_merges_overlaps() {
        let v = Neighborhood::new([
            (NodeId(0), iv(-2.0, -1.0)),
            (NodeId(0), iv(-1.0, -0.5)),
            (NodeId(0), iv(-3.0, -2.5)),
        ])
        .unwrap();
        assert_eq!(
            v.pieces(),
            &[(NodeId(0), iv(-3.0, -2.5)), (NodeId(0), iv(-2.0, -0.5))]
        );
    }

    #[test]
    fn agrees_on_examples() {
        let x = Configuration::from_points([(NodeId(1), -0.3)], None).unwrap();
        let empty = Configuration::new();
        let v = Neighborhood::new([(NodeId(1), iv(-0.5, 0.0))]).unwrap();
        assert!(agrees_on(&x, &x, &v).unwrap());
        assert!(!agrees_on(&x, &empty, &v).unwrap());
        let x = Configuration::from_points([(NodeId(1), -0.7)], None).unwrap();
        assert!(agrees_on(&x, &empty, &v).unwrap());
    }

    #[test]
    fn agrees_on_requires_coverage() {
        let x = Configuration::with_window(iv(-0.2, 0.0));
        let v = Neighborhood::new([(NodeId(1), iv(-0.5, 0.0))]).unwrap();
        assert!(matches!(
            agrees_on(&x, &x, &v),
            Err(Error::NotCovered { .. })
        ));
    }

    #[test]
    fn shift_examples() {
        assert!(shift_to_origin(&Configuration::new(), 3.0).is_empty());
        let x = Configuration::from_points([(NodeId(1), 2.0), (NodeId(1), 5.0)], None).unwrap();
        let s = shift_to_origin(&x, 5.0);
        assert_eq!(s.points(NodeId(1)), &[-3.0]);
        let x = Configuration::from_points([(NodeId(2), -1.0)], None).unwrap();
        assert_eq!(shift_to_origin(&x, 0.0), x);
    }

    #[test]
    fn shift_moves_window() {
        let mut x = Configuration::with_window(iv(0.0, 10.0));
        x.insert(NodeId(0), 1.0).unwrap();
        let s = shift_to_origin(&x, 4.0);
        assert_eq!(s.window(), Some(iv(-4.0, 0.0)));
    }

    #[test]
    fn validation_catches_collisions() {
        assert!(Configuration::from_points([(NodeId(0), 1.0), (NodeId(1), 1.0)], None).is_err());
        assert!(Configuration::from_points([(NodeId(0), 1.0), (NodeId(0), 1.0)], None).is_err());
        assert!(
            Configuration::from_points([(NodeId(0), 3.0)], Some(iv(0.0, 2.0))).is_err()
        );
    }

    #[test]
    fn refractory_guard() {
        let g = SubspaceGuard::RefractoryGap { delta: 1.0 };
        let ok = Configuration::from_points([(NodeId(0), 0.0), (NodeId(0), 1.5)], None).unwrap();
        let bad = Configuration::from_points([(NodeId(0), 0.0), (NodeId(0), 1.0)], None).unwrap();
        assert!(g.check(&ok).is_ok());
        assert!(matches!(g.check(&bad), Err(Error::GuardViolation { .. })));
    }

    #[test]
    fn activity_guard() {
        let g = SubspaceGuard::ActivityCap { horizon: 2.0, cap: 1 };
        let x = Configuration::from_points([(NodeId(0), 0.5), (NodeId(0), 1.5)], None).unwrap();
        assert!(g.check(&x).is_err());
        let x = Configuration::from_points([(NodeId(0), 0.5), (NodeId(0), 2.5)], None).unwrap();
        assert!(g.check(&x).is_ok());
    }
}
