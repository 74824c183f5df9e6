//! Age-dependent Hawkes processes with a hard refractory period.
//!
//! `φ^i(x) = ψ^i(Σ_j ∫ h^i_j(-s) dx^j_s) · 1{a^i(x) > δ}` decomposed on the
//! nested family `v^i_k = ω^i_k × [-kδ, 0)` with telescoping terms
//! `Δ^i_k = r^i_k − r^i_{k-1}`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::decomposition::{KalikowModel, NodeSet};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, RateFunction};
use crate::space::{Configuration, Interval, NodeId, SubspaceGuard};
use crate::weights::{LevelLaw, NeighborhoodDescriptor, NestedFamily, Nesting, WeightFamily};

use super::{age, kernel_drive, past_points, KernelMatrix};

/// Largest level examined when checking user-supplied bounds.
const BOUND_CHECK_LEVELS: u32 = 4096;
/// Largest tabulated head for bounds built from Γ̄.
const MAX_HEAD: u32 = 100_000;

/// Interaction kernels of an age-dependent model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AgeKernels {
    Explicit { kernels: KernelMatrix },
    /// `h^i_j(t) = β^i_j e^{-t/decay}` with `β^i_i = 1` and
    /// `β^i_j = 1/(2|j-i|^exponent)` otherwise.
    LatticePowerLaw { exponent: f64, decay: f64 },
}

impl AgeKernels {
    pub fn kernel(&self, i: NodeId, j: NodeId) -> Option<Kernel> {
        match self {
            AgeKernels::Explicit { kernels } => kernels.get(&(i, j)).cloned(),
            AgeKernels::LatticePowerLaw { exponent, decay } => {
                let d = (j.0 - i.0).unsigned_abs() as f64;
                let beta = if d == 0.0 { 1.0 } else { 0.5 * d.powf(-exponent) };
                Some(Kernel::Exponential {
                    scale: beta,
                    rate: 1.0 / decay,
                })
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            AgeKernels::Explicit { kernels } => kernels.values().try_for_each(Kernel::validate),
            AgeKernels::LatticePowerLaw { exponent, decay } => {
                if !(exponent.is_finite() && *exponent > 1.0) {
                    return Err(Error::param("gamma", "must exceed 1 for summable couplings"));
                }
                if !(decay.is_finite() && *decay > 0.0) {
                    return Err(Error::param("decay", "must be finite and > 0"));
                }
                Ok(())
            }
        }
    }
}

/// How the bounds `Γ^i_k` are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AgeBounds {
    /// `Γ^i_k = Γ̄^i_k` (finite nestings only).
    GammaBar,
    /// `Γ^i_k = scale · k^{-exponent}`, checked against `Γ̄^i_k`.
    PowerLaw { scale: f64, exponent: f64 },
}

/// Parameters of [`AgeHawkes::new`].
#[derive(Debug, Clone)]
pub struct AgeSpec {
    pub nodes: NodeSet,
    pub rate: RateFunction,
    pub per_node_rate: BTreeMap<NodeId, RateFunction>,
    pub kernels: AgeKernels,
    pub delta: f64,
    pub nesting: Nesting,
    pub bounds: AgeBounds,
}

/// Bounds `Γ^i_k = scale · law.weight(k)`.
#[derive(Debug, Clone, PartialEq)]
struct BoundLaw {
    scale: f64,
    law: LevelLaw,
}

impl BoundLaw {
    fn component(&self, k: u32) -> f64 {
        self.scale * self.law.weight(k)
    }

    fn total(&self) -> f64 {
        self.scale * self.law.total()
    }
}

/// See the module documentation.
#[derive(Debug, Clone)]
pub struct AgeHawkes {
    nodes: NodeSet,
    rate: RateFunction,
    per_node_rate: BTreeMap<NodeId, RateFunction>,
    kernels: AgeKernels,
    delta: f64,
    nesting: Nesting,
    /// Per-node bounds; the lattice uses the entry of node 0 for every node.
    bounds: BTreeMap<NodeId, BoundLaw>,
    family: WeightFamily,
}

impl AgeHawkes {
    pub fn new(spec: AgeSpec) -> Result<Self> {
        if !(spec.delta.is_finite() && spec.delta > 0.0) {
            return Err(Error::param("delta", "must be finite and > 0"));
        }
        spec.rate.validate()?;
        for r in spec.per_node_rate.values() {
            r.validate()?;
        }
        spec.kernels.validate()?;
        spec.nesting.validate()?;
        if matches!(spec.nodes, NodeSet::Integers) != matches!(spec.nesting, Nesting::Lattice) {
            return Err(Error::param(
                "nesting",
                "the lattice nesting goes with the integer node set and vice versa",
            ));
        }
        if matches!(spec.nodes, NodeSet::Integers)
            && !matches!(spec.kernels, AgeKernels::LatticePowerLaw { .. })
        {
            return Err(Error::param(
                "kernels",
                "lattice models need translation-invariant kernels",
            ));
        }
        let mut model = AgeHawkes {
            nodes: spec.nodes.clone(),
            rate: spec.rate,
            per_node_rate: spec.per_node_rate,
            kernels: spec.kernels,
            delta: spec.delta,
            nesting: spec.nesting.clone(),
            bounds: BTreeMap::new(),
            family: WeightFamily::Nested(NestedFamily {
                delta: spec.delta,
                nesting: spec.nesting,
                empty: 0.0,
                law: LevelLaw::Geometric { ratio: 0.5 },
                per_node: BTreeMap::new(),
            }),
        };
        let nodes: Vec<NodeId> = match &spec.nodes {
            NodeSet::Finite(nodes) => {
                if nodes.is_empty() {
                    return Err(Error::param("nodes", "at least one node is required"));
                }
                nodes.clone()
            }
            NodeSet::Integers => vec![NodeId(0)],
        };
        for &i in &nodes {
            if let Nesting::Explicit { sets } = &model.nesting {
                if !sets.contains_key(&i) {
                    return Err(Error::param("nesting", format!("no sets for node {i}")));
                }
            }
            let bound = match &spec.bounds {
                AgeBounds::GammaBar => {
                    if matches!(spec.nodes, NodeSet::Integers) {
                        return Err(Error::param(
                            "bounds",
                            "lattice models need explicit power-law bounds",
                        ));
                    }
                    BoundLaw {
                        scale: 1.0,
                        law: model.gamma_bar_law(i)?,
                    }
                }
                AgeBounds::PowerLaw { scale, exponent } => {
                    let law = LevelLaw::PowerLaw {
                        exponent: *exponent,
                    };
                    law.validate()?;
                    model.check_power_bound(i, *scale, *exponent)?;
                    BoundLaw {
                        scale: *scale,
                        law,
                    }
                }
            };
            bound.law.validate()?;
            if !(bound.total().is_finite() && bound.total() > 0.0) {
                return Err(Error::param("bounds", format!("node {i}: total bound is not finite and positive")));
            }
            model.bounds.insert(i, bound);
        }
        let per_node: BTreeMap<NodeId, LevelLaw> = model
            .bounds
            .iter()
            .map(|(i, b)| (*i, b.law.clone()))
            .collect();
        if let WeightFamily::Nested(f) = &mut model.family {
            f.law = per_node.values().next().cloned().expect("nonempty");
            if matches!(model.nodes, NodeSet::Finite(_)) {
                f.per_node = per_node;
            }
        }
        Ok(model)
    }

    pub fn refractory(&self) -> f64 {
        self.delta
    }

    pub fn nesting(&self) -> &Nesting {
        &self.nesting
    }

    pub fn kernels(&self) -> &AgeKernels {
        &self.kernels
    }

    fn rate(&self, i: NodeId) -> &RateFunction {
        self.per_node_rate.get(&i).unwrap_or(&self.rate)
    }

    fn bound(&self, i: NodeId) -> Result<&BoundLaw> {
        match self.nodes {
            NodeSet::Integers => Ok(&self.bounds[&NodeId(0)]),
            NodeSet::Finite(_) => self.bounds.get(&i).ok_or(Error::UnknownNode(i)),
        }
    }

    fn check_node(&self, i: NodeId) -> Result<()> {
        if self.nodes.contains(i) {
            Ok(())
        } else {
            Err(Error::UnknownNode(i))
        }
    }

    /// `Γ̄^i_k`.
    pub fn gamma_bar(&self, i: NodeId, k: u32) -> Result<f64> {
        self.check_node(i)?;
        let psi = self.rate(i);
        if k <= 1 {
            return Ok(psi.at_zero());
        }
        let outer = self.nesting.members(i, k)?;
        let mut acc = 0.0;
        for j in &outer {
            let Some(h) = self.kernels.kernel(i, *j) else {
                continue;
            };
            if self.nesting.entry_level(i, *j).is_some_and(|e| e < k) {
                acc += h.eval((k - 1) as f64 * self.delta);
            } else {
                acc += h.at_zero() + h.l1_norm() / self.delta;
            }
        }
        Ok(psi.lipschitz() * acc)
    }

    /// Tabulated bound law `Γ^i_k = Γ̄^i_k` with an exact geometric tail.
    fn gamma_bar_law(&self, i: NodeId) -> Result<LevelLaw> {
        let AgeKernels::Explicit { kernels } = &self.kernels else {
            return Err(Error::param("bounds", "Γ̄ bounds need explicit kernels"));
        };
        let sat = self.nesting.saturation(i).ok_or(Error::UnknownNode(i))?;
        let members = self.nesting.members(i, sat)?;
        let mut head_len = sat.max(1);
        let mut tail = Vec::new();
        for j in &members {
            match kernels.get(&(i, *j)) {
                Some(Kernel::Step { .. }) => {
                    let support = kernels[&(i, *j)].support();
                    let need = (support / self.delta).ceil() as u32 + 1;
                    head_len = head_len.max(need);
                }
                Some(Kernel::Exponential { .. }) | None => {}
            }
        }
        if head_len > MAX_HEAD {
            return Err(Error::param("kernels", "step kernels are too long relative to delta"));
        }
        let l = self.rate(i).lipschitz();
        for j in &members {
            if let Some(Kernel::Exponential { scale, rate }) = kernels.get(&(i, *j)) {
                if *scale > 0.0 && l > 0.0 {
                    let first = l * scale * (-rate * head_len as f64 * self.delta).exp();
                    tail.push((first, (-rate * self.delta).exp()));
                }
            }
        }
        let head = (1..=head_len)
            .map(|k| self.gamma_bar(i, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(LevelLaw::Tabulated { head, tail })
    }

    fn check_power_bound(&self, i: NodeId, scale: f64, exponent: f64) -> Result<()> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::param("bounds.scale", "must be finite and > 0"));
        }
        for k in 1..=BOUND_CHECK_LEVELS {
            let needed = self.gamma_bar(i, k)?;
            let given = scale * (k as f64).powf(-exponent);
            if given < needed * (1.0 - 1e-12) {
                return Err(Error::param(
                    "bounds",
                    format!("Γ_{k} = {given} is below the required {needed} for node {i}"),
                ));
            }
        }
        Ok(())
    }

    /// `Σ_{j ∈ ω^i_k} ∫_{[-kδ, 0)} h^i_j(-s) dx^j_s`, built from level `k-1`.
    fn drive_increment(&self, i: NodeId, k: u32, x: &Configuration) -> f64 {
        let lo = -(k as f64) * self.delta;
        let prev_lo = -((k - 1) as f64) * self.delta;
        let mut inc = 0.0;
        for (j, _) in x.iter_nodes() {
            let Some(entry) = self.nesting.entry_level(i, j) else {
                continue;
            };
            if entry > k {
                continue;
            }
            let Some(h) = self.kernels.kernel(i, j) else {
                continue;
            };
            let window = if entry == k {
                Interval { start: lo, end: 0.0 }
            } else {
                Interval {
                    start: lo,
                    end: prev_lo,
                }
            };
            inc += kernel_drive(&h, x.points_in(j, &window));
        }
        inc
    }

    /// Partial rates `r^i_1, ..., r^i_n` with shared drive accumulation.
    pub fn partial_rates(&self, i: NodeId, x: &Configuration, n: u32) -> Result<Vec<f64>> {
        self.check_node(i)?;
        let psi = self.rate(i);
        let alive = age(x, i) > self.delta;
        let mut out = Vec::with_capacity(n as usize);
        let mut drive = 0.0;
        for k in 1..=n {
            if k == 1 {
                drive = kernel_drive_or_zero(self, i, x);
            } else {
                drive += self.drive_increment(i, k, x);
            }
            out.push(if alive { psi.eval(drive) } else { 0.0 });
        }
        Ok(out)
    }
}

/// Drive of level 1: points of `i` itself on `[-δ, 0)`.
fn kernel_drive_or_zero(model: &AgeHawkes, i: NodeId, x: &Configuration) -> f64 {
    model.kernels.kernel(i, i).map_or(0.0, |h| {
        kernel_drive(
            &h,
            x.points_in(
                i,
                &Interval {
                    start: -model.delta,
                    end: 0.0,
                },
            ),
        )
    })
}

impl KalikowModel for AgeHawkes {
    fn family_name(&self) -> &'static str {
        "age"
    }

    fn nodes(&self) -> NodeSet {
        self.nodes.clone()
    }

    fn guard(&self) -> SubspaceGuard {
        SubspaceGuard::RefractoryGap { delta: self.delta }
    }

    fn weights(&self) -> &WeightFamily {
        &self.family
    }

    fn intensity(&self, i: NodeId, x: &Configuration) -> Result<f64> {
        self.check_node(i)?;
        self.check_guard(x)?;
        if let Some(w) = x.window() {
            if w.start > f64::NEG_INFINITY || w.end < 0.0 {
                return Err(Error::InsufficientWindow {
                    needed: f64::INFINITY,
                });
            }
        }
        if age(x, i) <= self.delta {
            return Ok(0.0);
        }
        let mut drive = 0.0;
        for (j, _) in x.iter_nodes() {
            if let Some(h) = self.kernels.kernel(i, j) {
                drive += kernel_drive(&h, past_points(x, j));
            }
        }
        Ok(self.rate(i).eval(drive))
    }

    fn delta(&self, i: NodeId, v: &NeighborhoodDescriptor, x: &Configuration) -> Result<f64> {
        self.check_node(i)?;
        let NeighborhoodDescriptor::Nested { k } = *v else {
            return Err(Error::UnknownDescriptor {
                node: i,
                descriptor: v.to_string(),
            });
        };
        if k == 0 {
            return Err(Error::UnknownDescriptor {
                node: i,
                descriptor: v.to_string(),
            });
        }
        let span = Interval {
            start: -(k as f64) * self.delta,
            end: 0.0,
        };
        if !x.covers(&span) {
            return Err(Error::InsufficientWindow {
                needed: -span.start,
            });
        }
        if age(x, i) <= self.delta {
            return Ok(0.0);
        }
        let psi = self.rate(i);
        if k == 1 {
            return Ok(psi.at_zero());
        }
        let mut drive = kernel_drive_or_zero(self, i, x);
        for m in 2..k {
            drive += self.drive_increment(i, m, x);
        }
        let before = psi.eval(drive);
        let after = psi.eval(drive + self.drive_increment(i, k, x));
        Ok((after - before).max(0.0))
    }

    fn total_bound(&self, i: NodeId) -> Option<f64> {
        self.check_node(i).ok()?;
        self.bound(i).ok().map(BoundLaw::total)
    }

    fn component_bound(&self, i: NodeId, v: &NeighborhoodDescriptor) -> Option<f64> {
        match v {
            NeighborhoodDescriptor::Nested { k } if *k >= 1 => {
                self.bound(i).ok().map(|b| b.component(*k))
            }
            _ => None,
        }
    }

    fn local_bound(&self, i: NodeId, _x: &Configuration, _horizon: f64) -> Result<f64> {
        self.check_node(i)?;
        Ok(self.bound(i)?.total())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::evaluate_decomposition;
    use approx::assert_relative_eq;

    fn two_node() -> AgeHawkes {
        let nodes = vec![NodeId(0), NodeId(1)];
        let mut kernels = KernelMatrix::new();
        for &i in &nodes {
            for &j in &nodes {
                let scale = if i == j { 0.4 } else { 0.3 };
                kernels.insert((i, j), Kernel::exponential(scale, 2.0).unwrap());
            }
        }
        AgeHawkes::new(AgeSpec {
            nodes: NodeSet::Finite(nodes.clone()),
            rate: RateFunction::Affine {
                offset: 1.0,
                slope: 1.0,
            },
            per_node_rate: BTreeMap::new(),
            kernels: AgeKernels::Explicit { kernels },
            delta: 0.2,
            nesting: Nesting::self_then_all(&nodes),
            bounds: AgeBounds::GammaBar,
        })
        .unwrap()
    }

    fn cfg(points: &[(i64, f64)]) -> Configuration {
        Configuration::from_points(points.iter().map(|&(n, t)| (NodeId(n), t)), None).unwrap()
    }

    #[test]
    fn refractory_kills_rate() {
        let m = two_node();
        let x = cfg(&[(0, -0.1)]);
        assert_eq!(m.intensity(NodeId(0), &x).unwrap(), 0.0);
        assert!(m.intensity(NodeId(1), &x).unwrap() > 1.0);
    }

    #[test]
    fn guard_violation_is_reported() {
        let m = two_node();
        let x = cfg(&[(0, -0.3), (0, -0.2)]);
        assert!(matches!(
            m.intensity(NodeId(0), &x),
            Err(Error::GuardViolation { .. })
        ));
    }

    #[test]
    fn telescoping_matches_partial_rates() {
        let m = two_node();
        let x = cfg(&[(0, -0.5), (1, -0.35), (1, -0.9), (0, -1.3)]);
        let rates = m.partial_rates(NodeId(0), &x, 30).unwrap();
        let mut acc = 0.0;
        for k in 1..=30u32 {
            acc += m.delta(NodeId(0), &NeighborhoodDescriptor::Nested { k }, &x).unwrap();
            assert_relative_eq!(acc, rates[(k - 1) as usize], max_relative = 1e-12);
        }
        assert_relative_eq!(
            rates[29],
            m.intensity(NodeId(0), &x).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn deltas_respect_component_bounds() {
        let m = two_node();
        let x = cfg(&[(0, -0.5), (1, -0.35), (1, -0.6), (0, -0.75), (1, -0.81)]);
        for k in 1..=40u32 {
            let v = NeighborhoodDescriptor::Nested { k };
            let d = m.delta(NodeId(1), &v, &x).unwrap();
            assert!(d <= m.component_bound(NodeId(1), &v).unwrap() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn decomposition_converges() {
        let m = two_node();
        let x = cfg(&[(0, -0.5), (1, -0.35), (1, -0.9)]);
        let phi = m.intensity(NodeId(0), &x).unwrap();
        let sum = evaluate_decomposition(&m, NodeId(0), &x, 200).unwrap();
        assert_relative_eq!(phi, sum, max_relative = 1e-10);
    }

    #[test]
    fn gamma_bar_law_matches_direct_values() {
        let m = two_node();
        let b = m.bound(NodeId(0)).unwrap();
        for k in 1..50u32 {
            assert_relative_eq!(b.component(k), m.gamma_bar(NodeId(0), k).unwrap(), max_relative = 1e-12);
        }
        let direct: f64 = (1..5000u32).map(|k| m.gamma_bar(NodeId(0), k).unwrap()).sum();
        assert_relative_eq!(b.total(), direct, max_relative = 1e-12);
    }

    #[test]
    fn low_power_bound_is_rejected() {
        let nodes = vec![NodeId(0)];
        let kernels = KernelMatrix::from([((NodeId(0), NodeId(0)), Kernel::exponential(1.0, 1.0).unwrap())]);
        let r = AgeHawkes::new(AgeSpec {
            nodes: NodeSet::Finite(nodes.clone()),
            rate: RateFunction::identity(),
            per_node_rate: BTreeMap::new(),
            kernels: AgeKernels::Explicit { kernels },
            delta: 1.0,
            nesting: Nesting::self_then_all(&nodes),
            bounds: AgeBounds::PowerLaw {
                scale: 0.1,
                exponent: 2.0,
            },
        });
        assert!(r.is_err());
    }
}
