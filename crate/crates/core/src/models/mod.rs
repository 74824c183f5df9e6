//! Built-in model families.

mod age;
mod analytic;
mod gl;
mod lattice;
mod linear;
mod table;

pub use age::{AgeBounds, AgeHawkes, AgeKernels, AgeSpec};
pub use analytic::AnalyticHawkes;
pub use gl::{Coupling, GalvesLocherbach};
pub use lattice::{lattice_gamma_bar, lattice_preset, lattice_scale_constant, LatticePreset};
pub use linear::LinearHawkes;
pub use table::{ComponentRule, NodeRule, TableModel};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::space::{Configuration, Interval, NodeId};

/// Kernels `h^i_j` keyed by `(target i, source j)`.
pub type KernelMatrix = BTreeMap<(NodeId, NodeId), Kernel>;

fn past() -> Interval {
    Interval {
        start: f64::NEG_INFINITY,
        end: 0.0,
    }
}

/// Points of `node` at negative times.
fn past_points(x: &Configuration, node: NodeId) -> &[f64] {
    x.points_in(node, &past())
}

/// `Σ_{s ∈ x^j, s < 0} h(-s)`.
fn kernel_drive(h: &Kernel, ts: &[f64]) -> f64 {
    ts.iter().map(|&s| h.eval(-s)).sum()
}

/// Age `a^i(x)`: distance from 0 back to the last point of `i`, or `+∞`.
fn age(x: &Configuration, i: NodeId) -> f64 {
    x.last_before(i, 0.0).map_or(f64::INFINITY, |s| -s)
}

/// Largest number of points of `ts` (sorted) in any half-open window of length `eps`.
fn max_window_count(ts: &[f64], eps: f64) -> usize {
    let mut best = 0;
    let mut hi = 0;
    for lo in 0..ts.len() {
        while hi < ts.len() && ts[hi] < ts[lo] + eps {
            hi += 1;
        }
        best = best.max(hi - lo);
    }
    best
}

/// Bin index `n` with `-s ∈ ((n-1)ε, nε]`, i.e. `s ∈ [-nε, -(n-1)ε)`.
fn bin_of(s: f64, eps: f64) -> u64 {
    ((-s) / eps).ceil().max(1.0) as u64
}

/// Errors unless the window of `x` reaches back at least `range` before 0.
fn ensure_history(x: &Configuration, range: f64) -> Result<()> {
    if let Some(w) = x.window() {
        if range > 0.0 && (w.start > -range || w.end < 0.0) {
            return Err(Error::InsufficientWindow { needed: range });
        }
    }
    Ok(())
}

/// Per-atom bound `sup a_{(j,n)} / (π_j (1-r) r^{n-1})` over all later shifts of `x`.
fn atom_ratio_bound(
    x: &Configuration,
    target: NodeId,
    sources: &[(NodeId, f64)],
    kernels: &KernelMatrix,
    eps: f64,
    ratio: f64,
) -> Result<f64> {
    let mut best: f64 = 0.0;
    for &(j, pi) in sources {
        let Some(h) = kernels.get(&(target, j)) else {
            continue;
        };
        let ts = past_points(x, j);
        let Some(&last) = ts.last() else {
            continue;
        };
        if h.is_zero() {
            continue;
        }
        let m = max_window_count(ts, eps) as f64;
        let n_min = bin_of(last, eps);
        let sup = h
            .sup_geometric_ratio(n_min - 1, eps, ratio)
            .ok_or_else(|| Error::Explosion {
                node: target,
                reason: format!(
                    "kernel from node {j} decays slower than the bin weights (ratio {ratio})"
                ),
            })?;
        best = best.max(m * sup / (pi * (1.0 - ratio)));
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::Explosion {
            node: target,
            reason: "atom bound overflowed".into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_counts() {
        assert_eq!(max_window_count(&[], 1.0), 0);
        assert_eq!(max_window_count(&[-3.0, -2.9, -2.5, -1.0], 0.5), 2);
        assert_eq!(max_window_count(&[-3.0, -2.9, -2.6, -1.0], 0.5), 3);
    }

    #[test]
    fn bins() {
        assert_eq!(bin_of(-0.3, 0.5), 1);
        assert_eq!(bin_of(-0.5, 0.5), 1);
        assert_eq!(bin_of(-0.51, 0.5), 2);
    }
}
