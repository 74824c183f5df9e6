//! Nonlinear Hawkes processes with an analytic rate function, decomposed on
//! the Taylor family.

use std::collections::BTreeMap;

use crate::decomposition::{KalikowModel, NodeSet};
use crate::error::{Error, Result};
use crate::kernel::AnalyticRate;
use crate::space::{Configuration, NodeId, SubspaceGuard};
use crate::weights::{NeighborhoodDescriptor, TaylorFamily, WeightFamily};

use super::{atom_ratio_bound, ensure_history, kernel_drive, past_points, KernelMatrix};

/// Orders scanned when checking that the weights cover the Taylor terms.
const COVER_CHECK_ORDERS: u32 = 16;

/// `φ^i(x) = ψ^i(Σ_j ∫ h^i_j(-s) dx^j_s)` with `ψ^i` analytic at 0.
///
/// `Δ^i_∅ = ψ^i(0)` and for `v = w_{α_1} ∪ ... ∪ w_{α_k}`,
/// `Δ^i_v = c_k a_{α_1} ··· a_{α_k}` where `c_k = ψ^{(k)}(0)/k!` and
/// `a_{(j,n)}` is the kernel mass of the points of `j` in `w_{j,n}`.
#[derive(Debug, Clone)]
pub struct AnalyticHawkes {
    nodes: Vec<NodeId>,
    rates: BTreeMap<NodeId, AnalyticRate>,
    kernels: KernelMatrix,
    family: WeightFamily,
}

impl AnalyticHawkes {
    /// Builds the model with sources uniform over the nonzero kernels.
    pub fn new(
        rates: BTreeMap<NodeId, AnalyticRate>,
        kernels: KernelMatrix,
        epsilon: f64,
        order_ratio: f64,
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
            rates,
            kernels,
            TaylorFamily {
                epsilon,
                order_ratio,
                bin_ratio,
                sources,
            },
        )
    }

    pub fn with_family(
        rates: BTreeMap<NodeId, AnalyticRate>,
        kernels: KernelMatrix,
        family: TaylorFamily,
    ) -> Result<Self> {
        for r in rates.values() {
            r.validate()?;
        }
        for (&(i, j), h) in &kernels {
            h.validate()?;
            if !rates.contains_key(&i) || !rates.contains_key(&j) {
                return Err(Error::param(
                    &format!("kernels[{i}][{j}]"),
                    "refers to a node without a rate function",
                ));
            }
        }
        let family = WeightFamily::Taylor(family);
        family.validate()?;
        let model = AnalyticHawkes {
            nodes: rates.keys().copied().collect(),
            rates,
            kernels,
            family,
        };
        model.check_weights_cover_terms()?;
        Ok(model)
    }

    fn taylor(&self) -> &TaylorFamily {
        match &self.family {
            WeightFamily::Taylor(f) => f,
            _ => unreachable!("analytic models always use the Taylor family"),
        }
    }

    fn check_weights_cover_terms(&self) -> Result<()> {
        let f = self.taylor();
        for &i in &self.nodes {
            let sources = f.sources.get(&i).map(Vec::as_slice).unwrap_or(&[]);
            let psi = &self.rates[&i];
            let higher = (1..=COVER_CHECK_ORDERS).any(|k| psi.coefficient(k) > 0.0);
            for (&(t, j), h) in self.kernels.range((i, NodeId(i64::MIN))..=(i, NodeId(i64::MAX))) {
                debug_assert_eq!(t, i);
                if h.is_zero() || !higher {
                    continue;
                }
                if f.order_ratio == 0.0 || !sources.iter().any(|(s, w)| *s == j && *w > 0.0) {
                    return Err(Error::param(
                        "sources",
                        format!("kernel {j} -> {i} is nonzero but its atoms have zero weight"),
                    ));
                }
                if f.bin_ratio == 0.0 && h.support() > f.epsilon {
                    return Err(Error::param(
                        "bin_ratio",
                        format!("kernel {j} -> {i} reaches past the first bin, which needs a positive ratio"),
                    ));
                }
            }
        }
        Ok(())
    }

    fn check_node(&self, i: NodeId) -> Result<()> {
        if self.rates.contains_key(&i) {
            Ok(())
        } else {
            Err(Error::UnknownNode(i))
        }
    }

    pub fn radius(&self) -> f64 {
        self.rates
            .values()
            .map(AnalyticRate::radius)
            .fold(f64::INFINITY, f64::min)
    }

    fn dependence_range(&self, i: NodeId) -> f64 {
        self.kernels
            .iter()
            .filter(|((t, _), _)| *t == i)
            .map(|(_, h)| h.support())
            .fold(0.0, f64::max)
    }

    /// `Σ_j ∫ h^i_j(-s) dx^j_s`.
    pub fn drive(&self, i: NodeId, x: &Configuration) -> Result<f64> {
        self.check_node(i)?;
        ensure_history(x, self.dependence_range(i))?;
        let mut u = 0.0;
        for (j, _) in x.iter_nodes() {
            if let Some(h) = self.kernels.get(&(i, j)) {
                u += kernel_drive(h, past_points(x, j));
            }
        }
        Ok(u)
    }

    fn check_drive(&self, i: NodeId, u: f64) -> Result<()> {
        let k = self.rates[&i].radius();
        if u < k {
            Ok(())
        } else {
            Err(self.guard().violation(format!("node {i} has drive {u}, radius is {k}")))
        }
    }
}

impl KalikowModel for AnalyticHawkes {
    fn family_name(&self) -> &'static str {
        "analytic"
    }

    fn nodes(&self) -> NodeSet {
        NodeSet::Finite(self.nodes.clone())
    }

    fn guard(&self) -> SubspaceGuard {
        SubspaceGuard::DriveCap { cap: self.radius() }
    }

    fn weights(&self) -> &WeightFamily {
        &self.family
    }

    fn check_guard(&self, x: &Configuration) -> Result<()> {
        if self.radius().is_finite() {
            for &i in &self.nodes {
                let u = self.drive(i, x)?;
                self.check_drive(i, u)?;
            }
        }
        Ok(())
    }

    fn intensity(&self, i: NodeId, x: &Configuration) -> Result<f64> {
        let u = self.drive(i, x)?;
        self.check_drive(i, u)?;
        Ok(self.rates[&i].eval(u))
    }

    fn delta(&self, i: NodeId, v: &NeighborhoodDescriptor, x: &Configuration) -> Result<f64> {
        self.check_node(i)?;
        let nb = self.family.expand(i, v)?;
        x.ensure_covers(nb.region())?;
        let psi = &self.rates[&i];
        match v {
            NeighborhoodDescriptor::Empty => Ok(psi.coefficient(0)),
            NeighborhoodDescriptor::Taylor { atoms } => {
                let eps = self.taylor().epsilon;
                let mut d = psi.coefficient(atoms.len() as u32);
                for &(j, n) in atoms {
                    if d == 0.0 {
                        break;
                    }
                    let Some(h) = self.kernels.get(&(i, j)) else {
                        return Ok(0.0);
                    };
                    let bin = crate::space::Interval {
                        start: -(n as f64) * eps,
                        end: -((n - 1) as f64) * eps,
                    };
                    d *= kernel_drive(h, x.points_in(j, &bin));
                }
                Ok(d)
            }
            _ => unreachable!("expand accepted a foreign descriptor"),
        }
    }

    /// `sup_k c_k (A/q)^k / (1-q)` where `A` bounds every atom ratio
    /// `a_{(j,n)} / (π_j (1-r) r^{n-1})` over the later shifts of `x`.
    fn local_bound(&self, i: NodeId, x: &Configuration, _horizon: f64) -> Result<f64> {
        self.check_node(i)?;
        let f = self.taylor();
        let psi = &self.rates[&i];
        let sources = f.sources.get(&i).map(Vec::as_slice).unwrap_or(&[]);
        let q = f.order_ratio;
        if sources.is_empty() || q == 0.0 {
            return Ok(psi.coefficient(0) / (1.0 - q));
        }
        let a = atom_ratio_bound(x, i, sources, &self.kernels, f.epsilon, f.bin_ratio)?;
        let sup = psi.sup_weighted(a / q).ok_or_else(|| Error::Explosion {
            node: i,
            reason: format!("Taylor weights cannot dominate the drive (atom ratio {a}, order ratio {q})"),
        })?;
        Ok(sup / (1.0 - q))
    }
}
