//! The translation-invariant age-dependent model on ℤ.
//!
//! `ψ(u) = 1 + u`, `h^i_j(t) = β^i_j e^{-t/δ}` with `β^i_i = 1` and
//! `β^i_j = 1/(2|j-i|^γ)`, refractory period `δ`, nested sets
//! `ω^i_k = {i-k+1, ..., i+k-1}` and bounds `Γ_k = C_γ k^{-p}`.

use std::collections::BTreeMap;

use crate::decomposition::NodeSet;
use crate::error::{Error, Result};
use crate::kernel::RateFunction;
use crate::series;
use crate::weights::Nesting;

use super::age::{AgeBounds, AgeHawkes, AgeKernels, AgeSpec};

/// Levels scanned for the supremum in [`lattice_scale_constant`].
const SCALE_SCAN: u32 = 20_000;

/// `Γ̄_k = 2/(k-1)^γ + e^{-(k-1)}(1 + Σ_{m=1}^{k-2} m^{-γ})`, with `Γ̄_1 = 1`.
pub fn lattice_gamma_bar(gamma: f64, k: u32) -> f64 {
    if k <= 1 {
        return 1.0;
    }
    let km = (k - 1) as f64;
    let inner: f64 = (1..k - 1).map(|m| (m as f64).powf(-gamma)).sum();
    2.0 * km.powf(-gamma) + (-km).exp() * (1.0 + inner)
}

/// `C_γ = sup_k Γ̄_k k^γ`.
///
/// For large `k` the product tends to 2 from above, so a finite scan finds
/// the supremum.
pub fn lattice_scale_constant(gamma: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 1.0) {
        return Err(Error::param("gamma", "must be finite and > 1"));
    }
    let mut inner = 0.0;
    let mut best: f64 = 1.0;
    for k in 2..=SCALE_SCAN {
        if k >= 3 {
            inner += ((k - 2) as f64).powf(-gamma);
        }
        let km = (k - 1) as f64;
        let gb = 2.0 * km.powf(-gamma) + (-km).exp() * (1.0 + inner);
        best = best.max(gb * (k as f64).powf(gamma));
    }
    Ok(best)
}

/// The lattice model together with its constants.
#[derive(Debug, Clone)]
pub struct LatticePreset {
    pub model: AgeHawkes,
    pub gamma: f64,
    pub p: f64,
    pub delta: f64,
    /// `C_γ`.
    pub scale: f64,
}

impl LatticePreset {
    /// `Γ = C_γ ζ(p)`.
    pub fn total_bound(&self) -> f64 {
        self.scale * series::zeta(self.p).expect("p > 1 is checked at construction")
    }

    /// `f(p) = Σ_k (2k-1) k^{1-p} = 2ζ(p-2) − ζ(p-1)`.
    pub fn cost_series(&self) -> Result<f64> {
        if self.p <= 3.0 {
            return Err(Error::Divergent {
                family: "lattice".into(),
                reason: format!("f(p) diverges for p = {} <= 3", self.p),
            });
        }
        let z = |s: f64| series::zeta(s).expect("s > 1");
        Ok(2.0 * z(self.p - 2.0) - z(self.p - 1.0))
    }

    /// Mean offspring `C_γ δ f(p)`, the same for every node.
    pub fn mean_offspring(&self) -> Result<f64> {
        Ok(self.scale * self.delta * self.cost_series()?)
    }
}

/// Builds the lattice model with exponents `γ` (couplings) and `p` (weights)
/// and refractory period `δ`. Requires `1 < p ≤ γ`.
pub fn lattice_preset(gamma: f64, p: f64, delta: f64) -> Result<LatticePreset> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::param("p", "must be finite and > 1"));
    }
    if p > gamma {
        return Err(Error::param("p", format!("must not exceed gamma = {gamma}")));
    }
    let scale = lattice_scale_constant(gamma)?;
    let model = AgeHawkes::new(AgeSpec {
        nodes: NodeSet::Integers,
        rate: RateFunction::Affine {
            offset: 1.0,
            slope: 1.0,
        },
        per_node_rate: BTreeMap::new(),
        kernels: AgeKernels::LatticePowerLaw {
            exponent: gamma,
            decay: delta,
        },
        delta,
        nesting: Nesting::Lattice,
        bounds: AgeBounds::PowerLaw { scale, exponent: p },
    })?;
    Ok(LatticePreset {
        model,
        gamma,
        p,
        delta,
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::KalikowModel;
    use crate::space::{Configuration, NodeId};
    use crate::weights::NeighborhoodDescriptor;
    use approx::assert_relative_eq;

    #[test]
    fn closed_form_matches_model() {
        let preset = lattice_preset(4.0, 4.0, 1.0).unwrap();
        for k in 1..40 {
            assert_relative_eq!(
                preset.model.gamma_bar(NodeId(7), k).unwrap(),
                lattice_gamma_bar(4.0, k),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn gamma_bar_values() {
        assert_eq!(lattice_gamma_bar(4.0, 1), 1.0);
        assert_relative_eq!(lattice_gamma_bar(4.0, 2), 2.0 + (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(lattice_gamma_bar(4.0, 3), 0.125 + 2.0 * (-2.0f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn scale_constant_is_attained_at_two() {
        let c = lattice_scale_constant(4.0).unwrap();
        assert_relative_eq!(c, 16.0 * (2.0 + (-1.0f64).exp()), max_relative = 1e-14);
    }

    #[test]
    fn bound_sum_is_below_the_lipschitz_estimate() {
        // ψ(0) + 2L(Σ_j h(0) + δ^{-1} Σ_j ‖h‖₁) with Σ_j β_j = 1 + ζ(4)
        let sum: f64 = (1..3000).map(|k| lattice_gamma_bar(4.0, k)).sum();
        let betas = 1.0 + series::zeta(4.0).unwrap();
        assert!(sum <= 1.0 + 2.0 * (betas + betas));
    }

    #[test]
    fn empty_past_first_term() {
        let preset = lattice_preset(4.0, 4.0, 1.0).unwrap();
        let d = preset
            .model
            .delta(NodeId(0), &NeighborhoodDescriptor::Nested { k: 1 }, &Configuration::new())
            .unwrap();
        assert_eq!(d, 1.0);
    }

    #[test]
    fn p_above_gamma_is_rejected() {
        assert!(lattice_preset(4.0, 4.5, 1.0).is_err());
    }
}
