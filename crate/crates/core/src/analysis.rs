//! Branching-process predictions for the backward pass.
//!
//! A clan point of node `i` draws `v ~ λ^i` and then has, for every `j`,
//! Poisson many children of node `j` with mean `Γ^j μ(p_j(v))`. The clan is
//! dominated by the multitype Galton-Watson tree with mean matrix `M`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::decomposition::{KalikowModel, NodeSet};
use crate::error::{Error, Result};
use crate::models::lattice_scale_constant;
use crate::series::{hurwitz_zeta_bounded, Bounded};
use crate::space::{measure_with, NodeId};

/// Descriptors summed one by one before switching to the closed-form tail.
const ENUMERATED_HEAD: usize = 256;

/// Tolerance on the truncation error of the cost series.
pub const SERIES_TOLERANCE: f64 = 1e-8;

/// Terms of the cost series summed directly before the tail is bounded.
const COST_HEAD: usize = 64;

/// Iterates whose magnitude exceeds this are taken as divergence.
const ITERATE_CAP: f64 = 1e3;

const MAX_ITERATIONS: usize = 100_000;

fn bound_of(model: &dyn KalikowModel, j: NodeId) -> Result<f64> {
    let g = model.total_bound(j).ok_or(Error::MissingBound(j))?;
    if g.is_finite() && g >= 0.0 {
        Ok(g)
    } else {
        Err(Error::InvalidRate(g))
    }
}

fn check_finite_nodes(model: &dyn KalikowModel, nodes: &[NodeId]) -> Result<()> {
    if nodes.is_empty() {
        return Err(Error::param("nodes", "at least one node is required"));
    }
    for &i in nodes {
        if !model.nodes().contains(i) {
            return Err(Error::UnknownNode(i));
        }
        bound_of(model, i)?;
    }
    Ok(())
}

/// `M_ij = Γ^j Σ_v λ^i(v) μ(p_j(v))` over `nodes`.
pub fn branching_matrix(model: &dyn KalikowModel, nodes: &[NodeId]) -> Result<DMatrix<f64>> {
    check_finite_nodes(model, nodes)?;
    let n = nodes.len();
    let mut m = DMatrix::zeros(n, n);
    for (a, &i) in nodes.iter().enumerate() {
        for (b, &j) in nodes.iter().enumerate() {
            let mu = model.weights().mean_measure(i, j)?;
            if !mu.is_finite() {
                return Err(Error::Divergent {
                    family: model.family_name().into(),
                    reason: format!("mean measure of node {j} in the neighborhoods of {i}"),
                });
            }
            m[(a, b)] = bound_of(model, j)? * mu;
        }
    }
    Ok(m)
}

/// `γ^i = Σ_v λ^i(v) P(v)`, by enumeration of the leading descriptors and
/// the family's closed-form tail for the rest.
pub fn mean_offspring(model: &dyn KalikowModel, i: NodeId) -> Result<f64> {
    bound_of(model, i)?;
    let weights = model.weights();
    let mut head = 0.0;
    let mut taken = 0;
    for v in weights.enumerate(i).take(ENUMERATED_HEAD) {
        let p = weights.pmf(i, &v);
        taken += 1;
        if p == 0.0 {
            continue;
        }
        let nb = model.expand(i, &v)?;
        head += p * measure_with(nb.region(), |j| model.total_bound(j))?;
    }
    let tail = if weights.is_finite(i) && taken < ENUMERATED_HEAD {
        0.0
    } else {
        weights.measure_tail(i, taken, &|j| model.total_bound(j).unwrap_or(f64::NAN))?
    };
    let total = head + tail;
    if total.is_nan() {
        return Err(Error::param("bounds", format!("a node reachable from {i} has no bound")));
    }
    if total.is_infinite() {
        return Err(Error::Divergent {
            family: model.family_name().into(),
            reason: format!("offspring mean of node {i}"),
        });
    }
    Ok(total)
}

/// Which nodes the subcriticality constant is taken over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GammaScope {
    Nodes { nodes: Vec<NodeId> },
    /// Translation-invariant model: every node has the offspring law of
    /// `representative`.
    Invariant { representative: NodeId },
}

impl GammaScope {
    /// All nodes of a finite model, or node 0 of an invariant one.
    pub fn for_model(model: &dyn KalikowModel) -> Self {
        match model.nodes() {
            NodeSet::Finite(nodes) => GammaScope::Nodes { nodes },
            NodeSet::Integers => GammaScope::Invariant {
                representative: NodeId(0),
            },
        }
    }

    fn nodes(&self) -> Vec<NodeId> {
        match self {
            GammaScope::Nodes { nodes } => nodes.clone(),
            GammaScope::Invariant { representative } => vec![*representative],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Subcritical,
    Supercritical,
}

impl Verdict {
    pub fn of(gamma: f64) -> Self {
        if gamma < 1.0 {
            Verdict::Subcritical
        } else {
            Verdict::Supercritical
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subcriticality {
    pub gamma: f64,
    pub verdict: Verdict,
}

/// `γ = sup_i Σ_v λ^i(v) P(v)` over the scope.
pub fn subcriticality_gamma(model: &dyn KalikowModel, scope: &GammaScope) -> Result<Subcriticality> {
    let nodes = scope.nodes();
    check_finite_nodes(model, &nodes)?;
    let mut gamma: f64 = 0.0;
    for i in nodes {
        gamma = gamma.max(mean_offspring(model, i)?);
    }
    Ok(Subcriticality {
        gamma,
        verdict: Verdict::of(gamma),
    })
}

fn max_row_sum(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.sum()).fold(0.0, f64::max)
}

/// `(Id − M)^{-1} 𝟙`, the expected total clan sizes of all types.
pub fn expected_clan_sizes(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::param("M", "must be square"));
    }
    if m.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::param("M", "entries must be finite and >= 0"));
    }
    let gamma = max_row_sum(m);
    if gamma >= 1.0 {
        return Err(Error::NonSummable(gamma));
    }
    let n = m.nrows();
    let a = DMatrix::identity(n, n) - m;
    let w = a
        .lu()
        .solve(&DVector::from_element(n, 1.0))
        .ok_or_else(|| Error::Invariant("Id − M is singular".into()))?;
    Ok(w.iter().copied().collect())
}

/// `e_i^T (Id − M)^{-1} 𝟙`, the ancestor included.
pub fn expected_clan_size(m: &DMatrix<f64>, i: usize) -> Result<f64> {
    if i >= m.nrows() {
        return Err(Error::param("i", format!("index {i} out of range for {} types", m.nrows())));
    }
    Ok(expected_clan_sizes(m)?[i])
}

/// `1/(1 − γ)` for a model with constant row sums `γ`.
pub fn expected_clan_size_invariant(gamma: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::param("gamma", "must be finite and >= 0"));
    }
    if gamma >= 1.0 {
        return Err(Error::NonSummable(gamma));
    }
    Ok(1.0 / (1.0 - gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    /// Full mean matrix over a finite node set.
    FiniteMatrix,
    /// Scalar row sum of a translation-invariant model.
    TranslationInvariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingSummary {
    pub nodes: Vec<NodeId>,
    /// Rows of `M`; a single entry `γ` under the invariant reduction.
    pub matrix: Vec<Vec<f64>>,
    pub gamma: f64,
    pub verdict: Verdict,
    /// Offspring mean falling outside `nodes`, per row.
    pub off_set_mass: Vec<f64>,
    /// `None` when `γ ≥ 1`.
    pub expected_w: Option<Vec<f64>>,
    pub reduction: Reduction,
}

pub fn branching_summary(model: &dyn KalikowModel, scope: &GammaScope) -> Result<BranchingSummary> {
    let sub = subcriticality_gamma(model, scope)?;
    match scope {
        GammaScope::Invariant { representative } => Ok(BranchingSummary {
            nodes: vec![*representative],
            matrix: vec![vec![sub.gamma]],
            gamma: sub.gamma,
            verdict: sub.verdict,
            off_set_mass: vec![0.0],
            expected_w: expected_clan_size_invariant(sub.gamma).ok().map(|w| vec![w]),
            reduction: Reduction::TranslationInvariant,
        }),
        GammaScope::Nodes { nodes } => {
            let m = branching_matrix(model, nodes)?;
            let mut off = Vec::with_capacity(nodes.len());
            for (a, &i) in nodes.iter().enumerate() {
                let total = mean_offspring(model, i)?;
                off.push((total - m.row(a).sum()).max(0.0));
            }
            let row_gamma = max_row_sum(&m);
            let expected_w = if row_gamma < 1.0 {
                Some(expected_clan_sizes(&m)?)
            } else {
                None
            };
            Ok(BranchingSummary {
                nodes: nodes.clone(),
                matrix: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
                gamma: sub.gamma,
                verdict: sub.verdict,
                off_set_mass: off,
                expected_w,
                reduction: Reduction::FiniteMatrix,
            })
        }
    }
}

/// Offspring law of one type: a mixture over neighborhoods of independent
/// Poisson counts per type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonMixture {
    pub weights: Vec<f64>,
    /// `means[c][j]`, the Poisson mean of type-`j` children in component `c`.
    pub means: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogLaplaceForm {
    /// `log Σ_v λ(v) exp(Σ_j (e^{θ_j} − 1) Γ^j μ(p_j(v)))`.
    #[default]
    Mixture,
    /// `Σ_j log Σ_v λ(v) exp((e^{θ_j} − 1) Γ^j μ(p_j(v)))`.
    Factorized,
}

/// Offspring laws of every type of a finite branching process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffspringLaws {
    pub types: Vec<PoissonMixture>,
}

impl OffspringLaws {
    /// Pure Poisson offspring with mean matrix `m`.
    pub fn poisson(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::param("M", "must be square"));
        }
        if m.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param("M", "entries must be finite and >= 0"));
        }
        Ok(OffspringLaws {
            types: m
                .row_iter()
                .map(|r| PoissonMixture {
                    weights: vec![1.0],
                    means: vec![r.iter().copied().collect()],
                })
                .collect(),
        })
    }

    /// Offspring laws of the clan restricted to `nodes`. Infinite families
    /// are truncated once the remaining weight falls below `1e-14`.
    pub fn from_model(model: &dyn KalikowModel, nodes: &[NodeId]) -> Result<Self> {
        check_finite_nodes(model, nodes)?;
        let mut types = Vec::with_capacity(nodes.len());
        for &i in nodes {
            let weights = model.weights();
            let mut mix = PoissonMixture {
                weights: Vec::new(),
                means: Vec::new(),
            };
            for (n, v) in weights.enumerate(i).enumerate() {
                if n >= ENUMERATED_HEAD && weights.tail_mass(i, n) < 1e-14 {
                    break;
                }
                if n >= 64 * ENUMERATED_HEAD {
                    return Err(Error::Divergent {
                        family: model.family_name().into(),
                        reason: format!("neighborhood weights of node {i} decay too slowly"),
                    });
                }
                let p = weights.pmf(i, &v);
                if p == 0.0 {
                    continue;
                }
                let nb = model.expand(i, &v)?;
                let mut row = vec![0.0; nodes.len()];
                for &(j, iv) in nb.pieces() {
                    if let Some(b) = nodes.iter().position(|&x| x == j) {
                        row[b] += bound_of(model, j)? * iv.len();
                    }
                }
                mix.weights.push(p);
                mix.means.push(row);
            }
            types.push(mix);
        }
        Ok(OffspringLaws { types })
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    /// Mean matrix of the laws.
    pub fn mean_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, t) in self.types.iter().enumerate() {
            let total: f64 = t.weights.iter().sum();
            for (w, row) in t.weights.iter().zip(&t.means) {
                for (j, mu) in row.iter().enumerate() {
                    m[(i, j)] += w * mu / total;
                }
            }
        }
        m
    }

    /// `φ_i(θ)` for every type.
    pub fn phi(&self, theta: &[f64], form: LogLaplaceForm) -> Vec<f64> {
        let growth: Vec<f64> = theta.iter().map(|t| t.exp_m1()).collect();
        self.types
            .iter()
            .map(|t| match form {
                LogLaplaceForm::Mixture => log_mix(&t.weights, t.means.iter().map(|row| dot(row, &growth))),
                LogLaplaceForm::Factorized => (0..growth.len())
                    .map(|j| log_mix(&t.weights, t.means.iter().map(|row| row[j] * growth[j])))
                    .sum(),
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log(Σ_c w_c e^{a_c} / Σ_c w_c)`, zero when every `a_c` is zero.
fn log_mix(weights: &[f64], exponents: impl Iterator<Item = f64>) -> f64 {
    let a: Vec<f64> = exponents.collect();
    if a.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    let total: f64 = weights.iter().sum();
    if a.iter().all(|x| x.abs() < 0.5) {
        // relative accuracy near zero
        let s: f64 = weights.iter().zip(&a).map(|(w, x)| w * x.exp_m1()).sum();
        return (s / total).ln_1p();
    }
    let top = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = weights.iter().zip(&a).map(|(w, x)| w * (x - top).exp()).sum();
    top + (s / total).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLaplaceState {
    pub theta: Vec<f64>,
    /// `φ_i(θ)`.
    pub phi_of_theta: Vec<f64>,
    /// The fixed point `Φ(θ)`.
    pub fixed_point: Vec<f64>,
    pub iterations: usize,
    /// `‖Φ − θ − φ(Φ)‖_∞`.
    pub residual: f64,
}

fn residual(laws: &OffspringLaws, theta: &[f64], x: &[f64], form: LogLaplaceForm) -> (Vec<f64>, f64) {
    let next: Vec<f64> = theta
        .iter()
        .zip(laws.phi(x, form))
        .map(|(t, p)| t + p)
        .collect();
    let r = next
        .iter()
        .zip(x)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    (next, r)
}

/// Iterates `Φ ← θ + φ(Φ)` from `Φ = θ` until the residual is below `tol`.
pub fn log_laplace_fixed_point(
    laws: &OffspringLaws,
    theta: &[f64],
    tol: f64,
    form: LogLaplaceForm,
) -> Result<LogLaplaceState> {
    if theta.len() != laws.len() {
        return Err(Error::param(
            "theta",
            format!("has {} entries for {} types", theta.len(), laws.len()),
        ));
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::param("theta", "entries must be finite"));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be > 0"));
    }
    let mut x = theta.to_vec();
    for iterations in 0..MAX_ITERATIONS {
        let (next, r) = residual(laws, theta, &x, form);
        if r < tol {
            return Ok(LogLaplaceState {
                theta: theta.to_vec(),
                phi_of_theta: laws.phi(theta, form),
                fixed_point: x,
                iterations,
                residual: r,
            });
        }
        if next.iter().any(|v| !v.is_finite() || v.abs() > ITERATE_CAP) {
            return Err(Error::OutsideConvergenceBall {
                iterations,
                last: next,
            });
        }
        x = next;
    }
    Err(Error::OutsideConvergenceBall {
        iterations: MAX_ITERATIONS,
        last: x,
    })
}

/// `dΦ/dθ` at `θ = 0` by central differences with step `h`.
pub fn log_laplace_jacobian(laws: &OffspringLaws, h: f64, form: LogLaplaceForm) -> Result<DMatrix<f64>> {
    let n = laws.len();
    // Φ is O(h) here, so an absolute tolerance far below h² keeps the
    // quotient accurate
    let tol = (h * h * 1e-6).max(1e-300);
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut plus = vec![0.0; n];
        plus[j] = h;
        let mut minus = vec![0.0; n];
        minus[j] = -h;
        let a = log_laplace_fixed_point(laws, &plus, tol, form)?;
        let b = log_laplace_fixed_point(laws, &minus, tol, form)?;
        for i in 0..n {
            jac[(i, j)] = (a.fixed_point[i] - b.fixed_point[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// `f(p) = Σ_{k≥1} (2k − 1) k^{1−p}` with a bound on the truncation error.
pub fn cost_series(p: f64) -> Result<Bounded> {
    if !(p.is_finite() && p > 3.0) {
        return Err(Error::Divergent {
            family: "lattice".into(),
            reason: format!("f(p) diverges for p = {p} <= 3"),
        });
    }
    // smallest terms first
    let mut head = 0.0;
    for k in (1..=COST_HEAD).rev() {
        let k = k as f64;
        head += (2.0 * k - 1.0) * k.powf(1.0 - p);
    }
    let a = COST_HEAD as f64 + 1.0;
    let z2 = hurwitz_zeta_bounded(p - 2.0, a).expect("p - 2 > 1");
    let z1 = hurwitz_zeta_bounded(p - 1.0, a).expect("p - 1 > 1");
    Ok(Bounded {
        value: head + 2.0 * z2.value - z1.value,
        error: 2.0 * z2.error + z1.error + 4.0 * f64::EPSILON * head,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    pub p: f64,
    /// `f(p)`.
    pub series: f64,
    /// `C_γ δ f(p)`.
    pub mean_offspring: f64,
    /// `1/(1 − M_i)`, absent for supercritical points.
    pub expected_clan_size: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub gamma: f64,
    pub delta: f64,
    /// `C_γ`.
    pub scale: f64,
    pub points: Vec<CostPoint>,
    /// Grid value with the smallest expected clan size among subcritical points.
    pub argmin: Option<f64>,
}

/// Expected clan size of the lattice model with weights `λ_k ∝ k^{-p}` for
/// every `p` of the grid.
pub fn weight_cost_curve(gamma: f64, delta: f64, p_grid: &[f64]) -> Result<CostCurve> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::param("delta", "must be finite and > 0"));
    }
    let scale = lattice_scale_constant(gamma)?;
    let mut points = Vec::with_capacity(p_grid.len());
    for &p in p_grid {
        if p > gamma {
            return Err(Error::param("p", format!("{p} exceeds gamma = {gamma}")));
        }
        let f = cost_series(p)?;
        if f.error > SERIES_TOLERANCE {
            return Err(Error::Divergent {
                family: "lattice".into(),
                reason: format!("truncation error {} of f({p}) above tolerance", f.error),
            });
        }
        let m = scale * delta * f.value;
        points.push(CostPoint {
            p,
            series: f.value,
            mean_offspring: m,
            expected_clan_size: expected_clan_size_invariant(m).ok(),
            verdict: Verdict::of(m),
        });
    }
    let argmin = points
        .iter()
        .filter_map(|c| c.expected_clan_size.map(|w| (c.p, w)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(p, _)| p);
    Ok(CostCurve {
        gamma,
        delta,
        scale,
        points,
        argmin,
    })
}

/// `δ` making the lattice model's mean offspring equal `target` at `p`.
pub fn lattice_delta_for(gamma: f64, p: f64, target: f64) -> Result<f64> {
    let scale = lattice_scale_constant(gamma)?;
    Ok(target / (scale * cost_series(p)?.value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{lattice_preset, ComponentRule, NodeRule, TableModel};
    use crate::space::{Interval, Neighborhood};
    use crate::weights::{AtomicFamily, ListedEntry, ListedFamily, WeightFamily};
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    fn atomic(bound: f64) -> TableModel {
        TableModel::new(
            BTreeMap::from([(
                NodeId(0),
                NodeRule {
                    bound,
                    component: ComponentRule::Constant { value: 0.5 * bound },
                },
            )]),
            WeightFamily::Atomic(AtomicFamily {
                epsilon: 0.5,
                empty: 0.5,
                ratio: 0.5,
                sources: BTreeMap::from([(NodeId(0), vec![(NodeId(0), 1.0)])]),
            }),
        )
        .unwrap()
    }

    #[test]
    fn empty_neighborhoods_give_zero_matrix() {
        let m = TableModel::constant(NodeId(0), 1.0, 2.0).unwrap();
        let bm = branching_matrix(&m, &[NodeId(0)]).unwrap();
        assert_eq!(bm[(0, 0)], 0.0);
        assert_eq!(subcriticality_gamma(&m, &GammaScope::for_model(&m)).unwrap().gamma, 0.0);
        assert_eq!(expected_clan_size(&bm, 0).unwrap(), 1.0);
    }

    #[test]
    fn single_neighborhood_product() {
        let v = Neighborhood::new([(NodeId(0), Interval::new(-0.25, 0.0).unwrap())]).unwrap();
        let m = TableModel::new(
            BTreeMap::from([(
                NodeId(0),
                NodeRule {
                    bound: 2.0,
                    component: ComponentRule::Constant { value: 1.0 },
                },
            )]),
            WeightFamily::Listed(ListedFamily {
                entries: BTreeMap::from([(NodeId(0), vec![ListedEntry { weight: 1.0, neighborhood: v }])]),
            }),
        )
        .unwrap();
        let bm = branching_matrix(&m, &[NodeId(0)]).unwrap();
        assert_relative_eq!(bm[(0, 0)], 0.5);
        assert_relative_eq!(expected_clan_size(&bm, 0).unwrap(), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn atomic_geometric_series() {
        let m = atomic(1.0);
        let bm = branching_matrix(&m, &[NodeId(0)]).unwrap();
        assert_relative_eq!(bm[(0, 0)], 0.25, max_relative = 1e-14);
        let s = subcriticality_gamma(&m, &GammaScope::for_model(&m)).unwrap();
        assert_relative_eq!(s.gamma, 0.25, max_relative = 1e-12);
        assert_eq!(s.verdict, Verdict::Subcritical);
        let s = subcriticality_gamma(&atomic(5.0), &GammaScope::for_model(&m)).unwrap();
        assert_relative_eq!(s.gamma, 1.25, max_relative = 1e-12);
        assert_eq!(s.verdict, Verdict::Supercritical);
    }

    #[test]
    fn hand_inverted_two_by_two() {
        let m = DMatrix::from_row_slice(2, 2, &[0.2, 0.3, 0.1, 0.4]);
        assert_relative_eq!(expected_clan_size(&m, 0).unwrap(), 2.0, max_relative = 1e-14);
        assert_relative_eq!(expected_clan_size(&m, 1).unwrap(), (0.8 + 0.1) / 0.45, max_relative = 1e-14);
    }

    #[test]
    fn supercritical_matrix_is_rejected() {
        let m = DMatrix::from_row_slice(1, 1, &[1.0]);
        assert!(matches!(expected_clan_size(&m, 0), Err(Error::NonSummable(_))));
    }

    #[test]
    fn fixed_point_at_zero() {
        let laws = OffspringLaws::poisson(&DMatrix::from_row_slice(2, 2, &[0.2, 0.3, 0.1, 0.4])).unwrap();
        let s = log_laplace_fixed_point(&laws, &[0.0, 0.0], 1e-12, LogLaplaceForm::Mixture).unwrap();
        assert_eq!(s.fixed_point, vec![0.0, 0.0]);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn single_type_poisson_root() {
        let laws = OffspringLaws::poisson(&DMatrix::from_row_slice(1, 1, &[0.5])).unwrap();
        let s = log_laplace_fixed_point(&laws, &[0.1], 1e-13, LogLaplaceForm::Mixture).unwrap();
        let x = s.fixed_point[0];
        assert!((x - 0.1 - 0.5 * x.exp_m1()).abs() < 1e-12);
        // the small root, checked against bisection on [0, 1]
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid - 0.1 - 0.5 * mid.exp_m1() < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_relative_eq!(x, lo, max_relative = 1e-11);
    }

    #[test]
    fn large_theta_leaves_the_ball() {
        let laws = OffspringLaws::poisson(&DMatrix::from_row_slice(1, 1, &[0.5])).unwrap();
        let r = log_laplace_fixed_point(&laws, &[2.0], 1e-12, LogLaplaceForm::Mixture);
        assert!(matches!(r, Err(Error::OutsideConvergenceBall { .. })));
    }

    #[test]
    fn jacobian_of_model_laws() {
        let m = atomic(1.0);
        let laws = OffspringLaws::from_model(&m, &[NodeId(0)]).unwrap();
        for form in [LogLaplaceForm::Mixture, LogLaplaceForm::Factorized] {
            let jac = log_laplace_jacobian(&laws, 1e-6, form).unwrap();
            assert_relative_eq!(jac[(0, 0)], 1.0 / 0.75, max_relative = 1e-5);
        }
    }

    #[test]
    fn cost_series_closed_form() {
        let z = |s: f64| crate::series::zeta(s).unwrap();
        let f = cost_series(4.0).unwrap();
        assert!(f.error < 1e-8);
        assert_relative_eq!(f.value, 2.0 * z(2.0) - z(3.0), max_relative = 1e-12);
        assert!((f.value - 2.0878).abs() < 1e-4);
        assert!(matches!(cost_series(3.0), Err(Error::Divergent { .. })));
    }

    #[test]
    fn optimum_is_at_gamma() {
        let delta = lattice_delta_for(4.0, 4.0, 0.5).unwrap();
        let grid = [3.2, 3.4, 3.6, 3.8, 4.0];
        let curve = weight_cost_curve(4.0, delta, &grid).unwrap();
        assert_eq!(curve.argmin, Some(4.0));
        assert_relative_eq!(curve.points[4].mean_offspring, 0.5, max_relative = 1e-12);
        assert!(curve.points.windows(2).all(|w| w[0].series > w[1].series));
    }

    #[test]
    fn lattice_gamma_agrees_with_cost_series() {
        let preset = lattice_preset(4.0, 4.0, 0.005).unwrap();
        let s = subcriticality_gamma(&preset.model, &GammaScope::for_model(&preset.model)).unwrap();
        assert_relative_eq!(s.gamma, preset.mean_offspring().unwrap(), max_relative = 1e-9);
    }

    #[test]
    fn log_mix_is_accurate_near_zero_and_continuous() {
        let w = [0.5, 0.5];
        let tiny = log_mix(&w, [1e-10, 0.0].into_iter());
        // ln(1 + (e^x - 1)/2) = x/2 + x²/8 + O(x³)
        assert!((tiny - (0.5e-10 + 1.25e-21)).abs() < 1e-25, "{tiny}");
        let below = log_mix(&w, [0.5f64.next_down(), 0.1].into_iter());
        let above = log_mix(&w, [0.5, 0.1].into_iter());
        let exact = (0.5 * (0.5f64.exp() + 0.1f64.exp())).ln();
        assert!((below - exact).abs() < 1e-15 && (above - exact).abs() < 1e-15);
    }
}

