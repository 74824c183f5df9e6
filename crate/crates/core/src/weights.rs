//! Neighborhood families and their weight distributions `λ^i`.
//!
//! Every family offers an exact pmf, an exact sampler, a deterministic
//! enumeration order and the closed-form mass left after the first `n`
//! enumerated descriptors.

use std::collections::BTreeMap;
use std::fmt;

use rand_distr::{Distribution, Geometric, Zeta};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::RandomStream;
use crate::series;
use crate::space::{Interval, Neighborhood, NodeId};

/// Compact name of a neighborhood; expands to a [`Neighborhood`] given the
/// family parameters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NeighborhoodDescriptor {
    Empty,
    /// `{node} × [-bin·ε, -(bin-1)·ε)`.
    Atom { node: NodeId, bin: u32 },
    /// `ω_k × [-kδ, 0)`.
    Nested { k: u32 },
    /// Union of atoms; order and repetitions are kept.
    Taylor { atoms: Vec<(NodeId, u32)> },
    /// Entry of an explicitly listed family.
    Listed { index: usize },
}

impl fmt::Display for NeighborhoodDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NeighborhoodDescriptor::Empty => write!(f, "empty"),
            NeighborhoodDescriptor::Atom { node, bin } => write!(f, "atom({node},{bin})"),
            NeighborhoodDescriptor::Nested { k } => write!(f, "nested({k})"),
            NeighborhoodDescriptor::Taylor { atoms } => {
                write!(f, "taylor(")?;
                for (m, (j, n)) in atoms.iter().enumerate() {
                    if m > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{j},{n}")?;
                }
                write!(f, ")")
            }
            NeighborhoodDescriptor::Listed { index } => write!(f, "listed({index})"),
        }
    }
}

/// Distribution of the level `k ≥ 1` of a nested family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LevelLaw {
    /// `k^{-p} / ζ(p)`.
    PowerLaw { exponent: f64 },
    /// `(1-r) r^{k-1}`.
    Geometric { ratio: f64 },
    /// Unnormalized weights: `head[k-1]` for `k ≤ head.len()`, then
    /// `Σ c·ρ^{k-H-1}` over the `(c, ρ)` tail terms.
    Tabulated {
        head: Vec<f64>,
        tail: Vec<(f64, f64)>,
    },
}

fn geometric_moment(n: f64, rho: f64, power: u32) -> f64 {
    // E[(n+G)^power] for G geometric on {1,2,...} with P(G=g) = (1-ρ)ρ^{g-1}
    let m1 = 1.0 / (1.0 - rho);
    let m2 = (1.0 + rho) / (1.0 - rho).powi(2);
    match power {
        0 => 1.0,
        1 => n + m1,
        _ => n * n + 2.0 * n * m1 + m2,
    }
}

impl LevelLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            LevelLaw::PowerLaw { exponent } => {
                if !(exponent.is_finite() && *exponent > 1.0) {
                    return Err(Error::param("weights.exponent", "must exceed 1"));
                }
            }
            LevelLaw::Geometric { ratio } => {
                if !(0.0..1.0).contains(ratio) {
                    return Err(Error::param("weights.ratio", "must lie in [0, 1)"));
                }
            }
            LevelLaw::Tabulated { head, tail } => {
                if head.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(Error::param("weights.head", "must be finite and >= 0"));
                }
                if tail
                    .iter()
                    .any(|(c, r)| !(c.is_finite() && *c >= 0.0 && (0.0..1.0).contains(r)))
                {
                    return Err(Error::param(
                        "weights.tail",
                        "coefficients must be >= 0 and ratios in [0, 1)",
                    ));
                }
                if self.total() <= 0.0 {
                    return Err(Error::param("weights", "total weight must be positive"));
                }
            }
        }
        Ok(())
    }

    fn name(&self) -> String {
        match self {
            LevelLaw::PowerLaw { exponent } => format!("power-law(p={exponent})"),
            LevelLaw::Geometric { ratio } => format!("geometric(r={ratio})"),
            LevelLaw::Tabulated { .. } => "tabulated".into(),
        }
    }

    /// Normalizing constant of the unnormalized weights.
    pub fn total(&self) -> f64 {
        match self {
            LevelLaw::PowerLaw { exponent } => series::zeta(*exponent).unwrap_or(f64::INFINITY),
            LevelLaw::Geometric { .. } => 1.0,
            LevelLaw::Tabulated { head, tail } => {
                head.iter().sum::<f64>() + tail.iter().map(|(c, r)| c / (1.0 - r)).sum::<f64>()
            }
        }
    }

    /// Unnormalized weight of level `k`.
    pub fn weight(&self, k: u32) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match self {
            LevelLaw::PowerLaw { exponent } => (k as f64).powf(-exponent),
            LevelLaw::Geometric { ratio } => (1.0 - ratio) * ratio.powi(k as i32 - 1),
            LevelLaw::Tabulated { head, tail } => {
                let h = head.len() as u32;
                if k <= h {
                    head[(k - 1) as usize]
                } else {
                    tail.iter()
                        .map(|(c, r)| c * r.powi((k - h - 1) as i32))
                        .sum()
                }
            }
        }
    }

    pub fn pmf(&self, k: u32) -> f64 {
        self.weight(k) / self.total()
    }

    /// `Σ_{k>n} k^power · pmf(k)` for `power ∈ {0, 1, 2}`.
    pub fn moment_tail(&self, n: u32, power: u32) -> Result<f64> {
        let divergent = |reason: String| Error::Divergent {
            family: self.name(),
            reason,
        };
        match self {
            LevelLaw::PowerLaw { exponent } => {
                let s = exponent - power as f64;
                if s <= 1.0 {
                    return Err(divergent(format!(
                        "moment of order {power} needs exponent > {}",
                        power + 1
                    )));
                }
                let tail = series::power_tail(s, n as u64).ok_or_else(|| divergent("tail".into()))?;
                Ok(tail / self.total())
            }
            LevelLaw::Geometric { ratio } => {
                Ok(ratio.powi(n as i32) * geometric_moment(n as f64, *ratio, power))
            }
            LevelLaw::Tabulated { head, tail } => {
                let h = head.len() as u32;
                let mut acc = 0.0;
                for k in (n + 1)..=h {
                    acc += (k as f64).powi(power as i32) * head[(k - 1) as usize];
                }
                let start = n.max(h);
                for (c, r) in tail {
                    // Σ_{k>start} k^power c r^{k-h-1}
                    acc += c * r.powi((start - h) as i32) / (1.0 - r)
                        * geometric_moment(start as f64, *r, power);
                }
                Ok(acc / self.total())
            }
        }
    }

    /// `P(K > n)`.
    pub fn tail(&self, n: u32) -> f64 {
        self.moment_tail(n, 0).expect("zeroth moment always converges")
    }

    pub fn sample(&self, rng: &mut RandomStream) -> u32 {
        match self {
            LevelLaw::PowerLaw { exponent } => {
                let z = Zeta::new(*exponent).expect("validated exponent");
                let k: f64 = z.sample(rng);
                k.min(u32::MAX as f64) as u32
            }
            LevelLaw::Geometric { ratio } => {
                let g = Geometric::new(1.0 - ratio).expect("validated ratio");
                1 + g.sample(rng).min(u32::MAX as u64 - 1) as u32
            }
            LevelLaw::Tabulated { head, tail } => {
                let mut u = rng.uniform() * self.total();
                for (m, w) in head.iter().enumerate() {
                    if u < *w {
                        return m as u32 + 1;
                    }
                    u -= w;
                }
                let h = head.len() as u32;
                for (idx, (c, r)) in tail.iter().enumerate() {
                    let mass = c / (1.0 - r);
                    if u < mass || idx + 1 == tail.len() {
                        let g = Geometric::new(1.0 - r).expect("validated ratio");
                        return h + 1 + g.sample(rng).min(u32::MAX as u64 / 2) as u32;
                    }
                    u -= mass;
                }
                h.max(1)
            }
        }
    }
}

/// Nested node sets `ω^i_1 ⊂ ω^i_2 ⊂ ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Nesting {
    /// `ω^i_k = {i-k+1, ..., i+k-1}` on ℤ.
    Lattice,
    /// Listed sets per node; the last set repeats forever.
    Explicit { sets: BTreeMap<NodeId, Vec<Vec<NodeId>>> },
}

impl Nesting {
    /// `ω^i_1 = {i}` and `ω^i_k = nodes` for `k ≥ 2`.
    pub fn self_then_all(nodes: &[NodeId]) -> Self {
        let sets = nodes
            .iter()
            .map(|&i| {
                let mut all = nodes.to_vec();
                all.sort();
                (i, vec![vec![i], all])
            })
            .collect();
        Nesting::Explicit { sets }
    }

    pub fn validate(&self) -> Result<()> {
        if let Nesting::Explicit { sets } = self {
            for (i, levels) in sets {
                match levels.first() {
                    Some(first) if first.as_slice() == [*i] => {}
                    _ => {
                        return Err(Error::param(
                            "nesting",
                            format!("first set of node {i} must be {{{i}}}"),
                        ))
                    }
                }
                for w in levels.windows(2) {
                    if !w[0].iter().all(|j| w[1].contains(j)) {
                        return Err(Error::param(
                            "nesting",
                            format!("sets of node {i} must be nested"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn levels(&self, i: NodeId) -> Result<&[Vec<NodeId>]> {
        match self {
            Nesting::Explicit { sets } => sets
                .get(&i)
                .map(Vec::as_slice)
                .ok_or(Error::UnknownNode(i)),
            Nesting::Lattice => Ok(&[]),
        }
    }

    /// `ω^i_k`, sorted.
    pub fn members(&self, i: NodeId, k: u32) -> Result<Vec<NodeId>> {
        match self {
            Nesting::Lattice => {
                let r = k as i64 - 1;
                Ok((i.0 - r..=i.0 + r).map(NodeId).collect())
            }
            Nesting::Explicit { .. } => {
                let levels = self.levels(i)?;
                let idx = (k.max(1) as usize - 1).min(levels.len() - 1);
                let mut m = levels[idx].clone();
                m.sort();
                m.dedup();
                Ok(m)
            }
        }
    }

    pub fn contains(&self, i: NodeId, k: u32, j: NodeId) -> bool {
        self.entry_level(i, j).is_some_and(|e| e <= k)
    }

    /// Smallest `k` with `j ∈ ω^i_k`.
    pub fn entry_level(&self, i: NodeId, j: NodeId) -> Option<u32> {
        match self {
            Nesting::Lattice => Some((j.0 - i.0).unsigned_abs() as u32 + 1),
            Nesting::Explicit { sets } => sets
                .get(&i)?
                .iter()
                .position(|s| s.contains(&j))
                .map(|p| p as u32 + 1),
        }
    }

    /// Level after which the sets stop growing; `None` for the lattice.
    pub fn saturation(&self, i: NodeId) -> Option<u32> {
        match self {
            Nesting::Lattice => None,
            Nesting::Explicit { sets } => sets.get(&i).map(|l| l.len() as u32),
        }
    }
}

/// One entry of a listed family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListedEntry {
    pub weight: f64,
    pub neighborhood: Neighborhood,
}

/// Finitely many explicit neighborhoods per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListedFamily {
    pub entries: BTreeMap<NodeId, Vec<ListedEntry>>,
}

/// `{∅} ∪ {w_{j,n}}` with `λ(∅) = e` and `λ(w_{j,n}) = (1-e) π_j (1-r) r^{n-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicFamily {
    pub epsilon: f64,
    pub empty: f64,
    pub ratio: f64,
    /// Source distribution `π^i_j` per target node `i`.
    pub sources: BTreeMap<NodeId, Vec<(NodeId, f64)>>,
}

/// Nested family `v^i_k = ω^i_k × [-kδ, 0)`, optionally with `∅`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedFamily {
    pub delta: f64,
    pub nesting: Nesting,
    /// `λ(∅)`; the remaining mass is spread over the levels.
    pub empty: f64,
    /// Level law used for every node unless overridden.
    pub law: LevelLaw,
    pub per_node: BTreeMap<NodeId, LevelLaw>,
}

/// Taylor family: order `k` with probability `(1-q) q^k`, then `k` atoms
/// drawn independently with source `π_j` and bin `n` geometric of ratio `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorFamily {
    pub epsilon: f64,
    pub order_ratio: f64,
    pub bin_ratio: f64,
    pub sources: BTreeMap<NodeId, Vec<(NodeId, f64)>>,
}

/// A family of neighborhoods with weights, for every node of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightFamily {
    Listed(ListedFamily),
    Atomic(AtomicFamily),
    Nested(NestedFamily),
    Taylor(TaylorFamily),
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::param(name, format!("{p} is not in [0, 1]")))
    }
}

fn check_sources(sources: &BTreeMap<NodeId, Vec<(NodeId, f64)>>) -> Result<()> {
    for (i, list) in sources {
        let mut total = 0.0;
        for (j, w) in list {
            check_probability(&format!("sources[{i}][{j}]"), *w)?;
            total += w;
        }
        if !list.is_empty() && (total - 1.0).abs() > 1e-9 {
            return Err(Error::param(
                &format!("sources[{i}]"),
                format!("weights sum to {total}, not 1"),
            ));
        }
    }
    Ok(())
}

fn pick<'a>(list: &'a [(NodeId, f64)], rng: &mut RandomStream) -> &'a NodeId {
    let mut u = rng.uniform();
    for (j, w) in list {
        if u < *w {
            return j;
        }
        u -= w;
    }
    &list.last().expect("nonempty source list").0
}

fn atom(epsilon: f64, j: NodeId, n: u32) -> (NodeId, Interval) {
    (
        j,
        Interval {
            start: -(n as f64) * epsilon,
            end: -((n - 1) as f64) * epsilon,
        },
    )
}

impl AtomicFamily {
    fn sources_of(&self, i: NodeId) -> &[(NodeId, f64)] {
        self.sources.get(&i).map(Vec::as_slice).unwrap_or(&[])
    }

    fn empty_of(&self, i: NodeId) -> f64 {
        if self.sources_of(i).is_empty() {
            1.0
        } else {
            self.empty
        }
    }

    fn pmf(&self, i: NodeId, v: &NeighborhoodDescriptor) -> Option<f64> {
        match v {
            NeighborhoodDescriptor::Empty => Some(self.empty_of(i)),
            NeighborhoodDescriptor::Atom { node, bin } if *bin >= 1 => {
                let pi = self
                    .sources_of(i)
                    .iter()
                    .find(|(j, _)| j == node)
                    .map(|(_, w)| *w)?;
                Some(
                    (1.0 - self.empty)
                        * pi
                        * (1.0 - self.ratio)
                        * self.ratio.powi(*bin as i32 - 1),
                )
            }
            _ => None,
        }
    }
}

impl TaylorFamily {
    fn sources_of(&self, i: NodeId) -> &[(NodeId, f64)] {
        self.sources.get(&i).map(Vec::as_slice).unwrap_or(&[])
    }

    fn atom_pmf(&self, i: NodeId, j: NodeId, n: u32) -> Option<f64> {
        if n == 0 {
            return None;
        }
        let pi = self
            .sources_of(i)
            .iter()
            .find(|(s, _)| *s == j)
            .map(|(_, w)| *w)?;
        Some(pi * (1.0 - self.bin_ratio) * self.bin_ratio.powi(n as i32 - 1))
    }

    /// Descriptors whose bins sum to `level`, in a fixed order.
    fn level_items(&self, i: NodeId, level: u32) -> Vec<NeighborhoodDescriptor> {
        if level == 0 {
            return vec![NeighborhoodDescriptor::Empty];
        }
        let sources: Vec<NodeId> = self.sources_of(i).iter().map(|(j, _)| *j).collect();
        if sources.is_empty() {
            return Vec::new();
        }
        let mut out = Vec::new();
        // compositions of `level` into positive parts
        let mut stack: Vec<Vec<u32>> = vec![Vec::new()];
        let mut compositions = Vec::new();
        while let Some(parts) = stack.pop() {
            let used: u32 = parts.iter().sum();
            if used == level {
                compositions.push(parts);
                continue;
            }
            for next in (1..=level - used).rev() {
                let mut p = parts.clone();
                p.push(next);
                stack.push(p);
            }
        }
        compositions.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
        for bins in compositions {
            let k = bins.len();
            let total = sources.len().pow(k as u32);
            for code in 0..total {
                let mut c = code;
                let atoms = bins
                    .iter()
                    .map(|&n| {
                        let j = sources[c % sources.len()];
                        c /= sources.len();
                        (j, n)
                    })
                    .collect();
                out.push(NeighborhoodDescriptor::Taylor { atoms });
            }
        }
        out
    }
}

impl NestedFamily {
    pub fn law(&self, i: NodeId) -> &LevelLaw {
        self.per_node.get(&i).unwrap_or(&self.law)
    }

    fn has_empty(&self) -> bool {
        self.empty > 0.0
    }

    /// Number of leading enumeration slots taken by `∅`.
    fn offset(&self) -> usize {
        usize::from(self.has_empty())
    }

    /// `Σ_{k>m} λ(v_k) P(v_k)` for bounds `bound`.
    fn measure_beyond(&self, i: NodeId, m: u32, bound: &dyn Fn(NodeId) -> f64) -> Result<f64> {
        let law = self.law(i);
        let scale = (1.0 - self.empty) * self.delta;
        match &self.nesting {
            Nesting::Lattice => {
                // |ω_k| = 2k-1 with translation invariant bounds
                let g = bound(i);
                let m2 = law.moment_tail(m, 2)?;
                let m1 = law.moment_tail(m, 1)?;
                Ok(scale * g * (2.0 * m2 - m1))
            }
            Nesting::Explicit { .. } => {
                let sat = self.nesting.saturation(i).ok_or(Error::UnknownNode(i))?;
                let mut acc = 0.0;
                for k in (m + 1)..=sat {
                    let g: f64 = self.nesting.members(i, k)?.into_iter().map(bound).sum();
                    acc += scale * law.pmf(k) * k as f64 * g;
                }
                let g: f64 = self.nesting.members(i, sat)?.into_iter().map(bound).sum();
                acc += scale * g * law.moment_tail(m.max(sat), 1)?;
                Ok(acc)
            }
        }
    }
}

impl WeightFamily {
    pub fn validate(&self) -> Result<()> {
        match self {
            WeightFamily::Listed(f) => {
                for (i, entries) in &f.entries {
                    let mut total = 0.0;
                    for (idx, e) in entries.iter().enumerate() {
                        check_probability(&format!("weights[{i}][{idx}]"), e.weight)?;
                        total += e.weight;
                    }
                    if (total - 1.0).abs() > 1e-9 {
                        return Err(Error::param(
                            &format!("weights[{i}]"),
                            format!("weights sum to {total}, not 1"),
                        ));
                    }
                }
            }
            WeightFamily::Atomic(f) => {
                if !(f.epsilon.is_finite() && f.epsilon > 0.0) {
                    return Err(Error::param("epsilon", "must be finite and > 0"));
                }
                check_probability("empty_weight", f.empty)?;
                if !(0.0..1.0).contains(&f.ratio) {
                    return Err(Error::param("bin_ratio", "must lie in [0, 1)"));
                }
                check_sources(&f.sources)?;
            }
            WeightFamily::Nested(f) => {
                if !(f.delta.is_finite() && f.delta > 0.0) {
                    return Err(Error::param("delta", "must be finite and > 0"));
                }
                if !(0.0..1.0).contains(&f.empty) {
                    return Err(Error::param("empty_weight", "must lie in [0, 1)"));
                }
                f.nesting.validate()?;
                f.law.validate()?;
                for law in f.per_node.values() {
                    law.validate()?;
                }
            }
            WeightFamily::Taylor(f) => {
                if !(f.epsilon.is_finite() && f.epsilon > 0.0) {
                    return Err(Error::param("epsilon", "must be finite and > 0"));
                }
                if !(0.0..1.0).contains(&f.order_ratio) {
                    return Err(Error::param("order_ratio", "must lie in [0, 1)"));
                }
                if !(0.0..1.0).contains(&f.bin_ratio) {
                    return Err(Error::param("bin_ratio", "must lie in [0, 1)"));
                }
                check_sources(&f.sources)?;
            }
        }
        Ok(())
    }

    fn unknown(i: NodeId, v: &NeighborhoodDescriptor) -> Error {
        Error::UnknownDescriptor {
            node: i,
            descriptor: v.to_string(),
        }
    }

    /// `λ^i(v)`; zero for descriptors outside the family.
    pub fn pmf(&self, i: NodeId, v: &NeighborhoodDescriptor) -> f64 {
        self.try_pmf(i, v).unwrap_or(0.0)
    }

    fn try_pmf(&self, i: NodeId, v: &NeighborhoodDescriptor) -> Option<f64> {
        match self {
            WeightFamily::Listed(f) => match v {
                NeighborhoodDescriptor::Listed { index } => {
                    f.entries.get(&i)?.get(*index).map(|e| e.weight)
                }
                _ => None,
            },
            WeightFamily::Atomic(f) => f.pmf(i, v),
            WeightFamily::Nested(f) => match v {
                NeighborhoodDescriptor::Empty => Some(f.empty),
                NeighborhoodDescriptor::Nested { k } if *k >= 1 => {
                    Some((1.0 - f.empty) * f.law(i).pmf(*k))
                }
                _ => None,
            },
            WeightFamily::Taylor(f) => match v {
                NeighborhoodDescriptor::Empty if f.sources_of(i).is_empty() => Some(1.0),
                NeighborhoodDescriptor::Empty => Some(1.0 - f.order_ratio),
                NeighborhoodDescriptor::Taylor { atoms } if !atoms.is_empty() => {
                    let k = atoms.len() as i32;
                    let mut p = (1.0 - f.order_ratio) * f.order_ratio.powi(k);
                    for (j, n) in atoms {
                        p *= f.atom_pmf(i, *j, *n)?;
                    }
                    Some(p)
                }
                _ => None,
            },
        }
    }

    /// Draws a descriptor with law `λ^i`.
    pub fn sample(&self, i: NodeId, rng: &mut RandomStream) -> NeighborhoodDescriptor {
        match self {
            WeightFamily::Listed(f) => {
                let entries = f.entries.get(&i).map(Vec::as_slice).unwrap_or(&[]);
                let mut u = rng.uniform();
                let mut chosen = entries.len().saturating_sub(1);
                for (idx, e) in entries.iter().enumerate() {
                    if u < e.weight {
                        chosen = idx;
                        break;
                    }
                    u -= e.weight;
                }
                NeighborhoodDescriptor::Listed { index: chosen }
            }
            WeightFamily::Atomic(f) => {
                let sources = f.sources_of(i);
                if sources.is_empty() || rng.uniform() < f.empty {
                    return NeighborhoodDescriptor::Empty;
                }
                let node = *pick(sources, rng);
                let g = Geometric::new(1.0 - f.ratio).expect("validated ratio");
                let bin = 1 + g.sample(rng).min(u32::MAX as u64 - 1) as u32;
                NeighborhoodDescriptor::Atom { node, bin }
            }
            WeightFamily::Nested(f) => {
                if f.has_empty() && rng.uniform() < f.empty {
                    return NeighborhoodDescriptor::Empty;
                }
                NeighborhoodDescriptor::Nested {
                    k: f.law(i).sample(rng),
                }
            }
            WeightFamily::Taylor(f) => {
                let sources = f.sources_of(i);
                let order = Geometric::new(1.0 - f.order_ratio).expect("validated ratio");
                let k = order.sample(rng);
                if k == 0 || sources.is_empty() {
                    return NeighborhoodDescriptor::Empty;
                }
                let bins = Geometric::new(1.0 - f.bin_ratio).expect("validated ratio");
                let atoms = (0..k)
                    .map(|_| {
                        let j = *pick(sources, rng);
                        let n = 1 + bins.sample(rng).min(u32::MAX as u64 - 1) as u32;
                        (j, n)
                    })
                    .collect();
                NeighborhoodDescriptor::Taylor { atoms }
            }
        }
    }

    /// The neighborhood named by `v` for node `i`.
    pub fn expand(&self, i: NodeId, v: &NeighborhoodDescriptor) -> Result<Neighborhood> {
        if self.try_pmf(i, v).is_none() {
            return Err(Self::unknown(i, v));
        }
        match (self, v) {
            (_, NeighborhoodDescriptor::Empty) => Ok(Neighborhood::empty()),
            (WeightFamily::Listed(f), NeighborhoodDescriptor::Listed { index }) => {
                Ok(f.entries[&i][*index].neighborhood.clone())
            }
            (WeightFamily::Atomic(f), NeighborhoodDescriptor::Atom { node, bin }) => {
                Neighborhood::new([atom(f.epsilon, *node, *bin)])
            }
            (WeightFamily::Nested(f), NeighborhoodDescriptor::Nested { k }) => {
                let iv = Interval {
                    start: -(*k as f64) * f.delta,
                    end: 0.0,
                };
                Neighborhood::new(f.nesting.members(i, *k)?.into_iter().map(|j| (j, iv)))
            }
            (WeightFamily::Taylor(f), NeighborhoodDescriptor::Taylor { atoms }) => {
                Neighborhood::new(atoms.iter().map(|(j, n)| atom(f.epsilon, *j, *n)))
            }
            _ => Err(Self::unknown(i, v)),
        }
    }

    /// All descriptors of node `i` in the fixed enumeration order. Infinite
    /// for lazy families.
    pub fn enumerate(&self, i: NodeId) -> Box<dyn Iterator<Item = NeighborhoodDescriptor> + '_> {
        match self {
            WeightFamily::Listed(f) => {
                let n = f.entries.get(&i).map_or(0, Vec::len);
                Box::new((0..n).map(|index| NeighborhoodDescriptor::Listed { index }))
            }
            WeightFamily::Atomic(f) => {
                let sources: Vec<NodeId> = f.sources_of(i).iter().map(|(j, _)| *j).collect();
                let atoms = (1u32..).flat_map(move |bin| {
                    let s = sources.clone();
                    s.into_iter()
                        .map(move |node| NeighborhoodDescriptor::Atom { node, bin })
                });
                if f.sources_of(i).is_empty() {
                    Box::new(std::iter::once(NeighborhoodDescriptor::Empty))
                } else {
                    Box::new(std::iter::once(NeighborhoodDescriptor::Empty).chain(atoms))
                }
            }
            WeightFamily::Nested(f) => {
                let levels = (1u32..).map(|k| NeighborhoodDescriptor::Nested { k });
                if f.has_empty() {
                    Box::new(std::iter::once(NeighborhoodDescriptor::Empty).chain(levels))
                } else {
                    Box::new(levels)
                }
            }
            WeightFamily::Taylor(f) => {
                if f.sources_of(i).is_empty() {
                    return Box::new(std::iter::once(NeighborhoodDescriptor::Empty));
                }
                Box::new((0u32..).flat_map(move |level| f.level_items(i, level)))
            }
        }
    }

    /// Whether the enumeration of node `i` is finite.
    pub fn is_finite(&self, i: NodeId) -> bool {
        match self {
            WeightFamily::Listed(_) => true,
            WeightFamily::Atomic(f) => f.sources_of(i).is_empty(),
            _ => false,
        }
    }

    /// Weight left after the first `n` enumerated descriptors.
    pub fn tail_mass(&self, i: NodeId, n: usize) -> f64 {
        match self {
            WeightFamily::Listed(f) => f
                .entries
                .get(&i)
                .map_or(0.0, |e| e.iter().skip(n).map(|e| e.weight).sum()),
            WeightFamily::Atomic(f) => {
                let sources = f.sources_of(i);
                if n == 0 {
                    return 1.0;
                }
                if sources.is_empty() {
                    return 0.0;
                }
                let (full, rem) = ((n - 1) / sources.len(), (n - 1) % sources.len());
                let partial: f64 = sources[..rem].iter().map(|(_, w)| w).sum();
                (1.0 - f.empty)
                    * f.ratio.powi(full as i32)
                    * (1.0 - (1.0 - f.ratio) * partial)
            }
            WeightFamily::Nested(f) => {
                if n < f.offset() {
                    return 1.0;
                }
                (1.0 - f.empty) * f.law(i).tail((n - f.offset()) as u32)
            }
            WeightFamily::Taylor(_) => {
                let head: f64 = self.enumerate(i).take(n).map(|v| self.pmf(i, &v)).sum();
                (1.0 - head).max(0.0)
            }
        }
    }

    /// `Σ λ^i(v) P(v)` over the descriptors after the first `n`, with `P`
    /// built from the per-node bounds.
    pub fn measure_tail(&self, i: NodeId, n: usize, bound: &dyn Fn(NodeId) -> f64) -> Result<f64> {
        match self {
            WeightFamily::Listed(f) => {
                let mut acc = 0.0;
                for e in f.entries.get(&i).map(Vec::as_slice).unwrap_or(&[]).iter().skip(n) {
                    acc += e.weight * crate::space::measure_with(e.neighborhood.region(), |j| Some(bound(j)))?;
                }
                Ok(acc)
            }
            WeightFamily::Atomic(f) => {
                let sources = f.sources_of(i);
                if sources.is_empty() {
                    return Ok(0.0);
                }
                let (full, rem) = if n == 0 {
                    (0, 0)
                } else {
                    ((n - 1) / sources.len(), (n - 1) % sources.len())
                };
                let all: f64 = sources.iter().map(|(j, w)| w * bound(*j)).sum();
                let done: f64 = sources[..rem].iter().map(|(j, w)| w * bound(*j)).sum();
                Ok((1.0 - f.empty)
                    * f.epsilon
                    * f.ratio.powi(full as i32)
                    * (all - (1.0 - f.ratio) * done))
            }
            WeightFamily::Nested(f) => {
                let m = n.saturating_sub(f.offset()) as u32;
                f.measure_beyond(i, m, bound)
            }
            WeightFamily::Taylor(_) => Err(Error::Unsupported(
                "measures of Taylor families are not available in closed form".into(),
            )),
        }
    }

    /// `Σ_v λ^i(v) μ(p_j(v))`, the mean Lebesgue measure of the `j`-section.
    pub fn mean_measure(&self, i: NodeId, j: NodeId) -> Result<f64> {
        match self {
            WeightFamily::Listed(f) => Ok(f
                .entries
                .get(&i)
                .map(|entries| {
                    entries
                        .iter()
                        .map(|e| {
                            e.weight
                                * e.neighborhood
                                    .pieces()
                                    .iter()
                                    .filter(|(n, _)| *n == j)
                                    .map(|(_, iv)| iv.len())
                                    .sum::<f64>()
                        })
                        .sum()
                })
                .unwrap_or(0.0)),
            WeightFamily::Atomic(f) => Ok(f
                .sources_of(i)
                .iter()
                .find(|(s, _)| *s == j)
                .map_or(0.0, |(_, w)| (1.0 - f.empty) * w * f.epsilon)),
            WeightFamily::Nested(f) => match f.nesting.entry_level(i, j) {
                None => Ok(0.0),
                Some(e) => Ok((1.0 - f.empty) * f.delta * f.law(i).moment_tail(e - 1, 1)?),
            },
            WeightFamily::Taylor(_) => Err(Error::Unsupported(
                "mean measures of Taylor families are not available in closed form".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn atomic(empty: f64, ratio: f64, sources: Vec<(NodeId, f64)>) -> WeightFamily {
        WeightFamily::Atomic(AtomicFamily {
            epsilon: 0.5,
            empty,
            ratio,
            sources: BTreeMap::from([(NodeId(0), sources)]),
        })
    }

    fn nested(law: LevelLaw, empty: f64) -> WeightFamily {
        WeightFamily::Nested(NestedFamily {
            delta: 1.0,
            nesting: Nesting::Lattice,
            empty,
            law,
            per_node: BTreeMap::new(),
        })
    }

    #[test]
    fn atomic_pmf_and_tail_agree() {
        let f = atomic(0.3, 0.6, vec![(NodeId(0), 0.25), (NodeId(1), 0.75)]);
        f.validate().unwrap();
        let i = NodeId(0);
        let mut acc = 0.0;
        for (n, v) in f.enumerate(i).take(41).enumerate() {
            assert_relative_eq!(acc + f.tail_mass(i, n), 1.0, epsilon = 1e-12);
            acc += f.pmf(i, &v);
        }
    }

    #[test]
    fn atomic_expansion() {
        let f = atomic(0.5, 0.5, vec![(NodeId(0), 1.0)]);
        let v = f
            .expand(NodeId(0), &NeighborhoodDescriptor::Atom { node: NodeId(0), bin: 2 })
            .unwrap();
        assert_eq!(v.pieces(), &[(NodeId(0), Interval { start: -1.0, end: -0.5 })]);
        assert!(f
            .expand(NodeId(0), &NeighborhoodDescriptor::Nested { k: 1 })
            .is_err());
    }

    #[test]
    fn power_law_pmf_tail_and_moments() {
        let law = LevelLaw::PowerLaw { exponent: 4.0 };
        let z4 = std::f64::consts::PI.powi(4) / 90.0;
        assert_relative_eq!(law.pmf(1), 1.0 / z4, max_relative = 1e-14);
        let head: f64 = (1..=20).map(|k| law.pmf(k)).sum();
        assert_relative_eq!(head + law.tail(20), 1.0, epsilon = 1e-13);
        let m1: f64 = (3..=200_000u32).map(|k| k as f64 * law.pmf(k)).sum();
        assert_relative_eq!(law.moment_tail(2, 1).unwrap(), m1, max_relative = 1e-8);
        assert!(LevelLaw::PowerLaw { exponent: 3.0 }.moment_tail(0, 2).is_err());
    }

    #[test]
    fn geometric_moments_match_direct_sums() {
        let law = LevelLaw::Geometric { ratio: 0.7 };
        for power in 0..=2 {
            let direct: f64 = (6..=2000u32)
                .map(|k| (k as f64).powi(power as i32) * law.pmf(k))
                .sum();
            assert_relative_eq!(law.moment_tail(5, power).unwrap(), direct, max_relative = 1e-10);
        }
    }

    #[test]
    fn tabulated_moments_match_direct_sums() {
        let law = LevelLaw::Tabulated {
            head: vec![1.0, 0.5, 0.25],
            tail: vec![(0.2, 0.5), (0.1, 0.9)],
        };
        law.validate().unwrap();
        let total: f64 = (1..=3000u32).map(|k| law.weight(k)).sum();
        assert_relative_eq!(total, law.total(), max_relative = 1e-12);
        for n in [0u32, 2, 3, 7] {
            for power in 0..=2 {
                let direct: f64 = ((n + 1)..=3000)
                    .map(|k| (k as f64).powi(power as i32) * law.pmf(k))
                    .sum();
                assert_relative_eq!(law.moment_tail(n, power).unwrap(), direct, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn nested_lattice_members() {
        let f = nested(LevelLaw::PowerLaw { exponent: 4.0 }, 0.0);
        let v = f
            .expand(NodeId(5), &NeighborhoodDescriptor::Nested { k: 2 })
            .unwrap();
        let nodes: Vec<i64> = v.pieces().iter().map(|(n, _)| n.0).collect();
        assert_eq!(nodes, vec![4, 5, 6]);
        assert!(v.pieces().iter().all(|(_, iv)| iv.start == -2.0 && iv.end == 0.0));
    }

    #[test]
    fn nested_measure_tail_matches_direct_sum() {
        let f = nested(LevelLaw::PowerLaw { exponent: 4.5 }, 0.0);
        let bound = |_: NodeId| 2.0;
        let direct: f64 = (4..=400_000u32)
            .map(|k| {
                let law = LevelLaw::PowerLaw { exponent: 4.5 };
                law.pmf(k) * (2 * k - 1) as f64 * k as f64 * 2.0
            })
            .sum();
        assert_relative_eq!(f.measure_tail(NodeId(0), 3, &bound).unwrap(), direct, max_relative = 1e-6);
    }

    #[test]
    fn nested_explicit_measures() {
        let nodes = [NodeId(0), NodeId(1)];
        let f = WeightFamily::Nested(NestedFamily {
            delta: 0.5,
            nesting: Nesting::self_then_all(&nodes),
            empty: 0.2,
            law: LevelLaw::Geometric { ratio: 0.5 },
            per_node: BTreeMap::new(),
        });
        f.validate().unwrap();
        let bound = |j: NodeId| if j.0 == 0 { 1.0 } else { 3.0 };
        let total = f.measure_tail(NodeId(0), 0, &bound).unwrap();
        let by_node = f.mean_measure(NodeId(0), NodeId(0)).unwrap() * 1.0
            + f.mean_measure(NodeId(0), NodeId(1)).unwrap() * 3.0;
        assert_relative_eq!(total, by_node, max_relative = 1e-12);
        let direct: f64 = f
            .enumerate(NodeId(0))
            .take(200)
            .map(|v| {
                let nb = f.expand(NodeId(0), &v).unwrap();
                f.pmf(NodeId(0), &v)
                    * crate::space::measure_with(nb.region(), |j| Some(bound(j))).unwrap()
            })
            .sum();
        assert_relative_eq!(total, direct, max_relative = 1e-12);
    }

    #[test]
    fn taylor_pmf_sums_by_level() {
        let f = WeightFamily::Taylor(TaylorFamily {
            epsilon: 0.5,
            order_ratio: 0.4,
            bin_ratio: 0.3,
            sources: BTreeMap::from([(NodeId(0), vec![(NodeId(0), 0.5), (NodeId(1), 0.5)])]),
        });
        f.validate().unwrap();
        let i = NodeId(0);
        let s: f64 = 0.4 * 0.7 + 0.3;
        let head: f64 = f.enumerate(i).take(1 + 2 + 6 + 18).map(|v| f.pmf(i, &v)).sum();
        // levels 0..=3 complete: 1, 2, 2*3, 2*9 descriptors
        assert_relative_eq!(1.0 - head, 0.4 * s.powi(3), epsilon = 1e-12);
    }

    #[test]
    fn two_atom_sampler_frequencies() {
        let f = WeightFamily::Listed(ListedFamily {
            entries: BTreeMap::from([(
                NodeId(0),
                vec![
                    ListedEntry { weight: 0.25, neighborhood: Neighborhood::empty() },
                    ListedEntry { weight: 0.75, neighborhood: Neighborhood::empty() },
                ],
            )]),
        });
        let mut rng = RandomStream::new(42);
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| f.sample(NodeId(0), &mut rng) == NeighborhoodDescriptor::Listed { index: 0 })
            .count() as f64;
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        assert!((hits - 2500.0).abs() < 3.0 * sigma, "{hits}");
    }

    #[test]
    fn power_law_sampler_frequency_of_first_level() {
        let f = nested(LevelLaw::PowerLaw { exponent: 4.0 }, 0.0);
        let mut rng = RandomStream::new(9);
        let n = 100_000;
        let p = f.pmf(NodeId(0), &NeighborhoodDescriptor::Nested { k: 1 });
        let hits = (0..n)
            .filter(|_| f.sample(NodeId(0), &mut rng) == NeighborhoodDescriptor::Nested { k: 1 })
            .count() as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((hits - n as f64 * p).abs() < 3.0 * sigma, "{hits}");
    }

    #[test]
    fn degenerate_empty_family() {
        let f = atomic(1.0, 0.5, vec![(NodeId(0), 1.0)]);
        let mut rng = RandomStream::new(1);
        for _ in 0..100 {
            assert_eq!(f.sample(NodeId(0), &mut rng), NeighborhoodDescriptor::Empty);
        }
    }
}
