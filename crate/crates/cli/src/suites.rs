//! Statistical and property suites behind `kalikow validate`.
//!
//! Every threshold used to decide a suite lives in this file.

use std::collections::BTreeMap;
use std::time::Instant;

use kalikow::analysis::{
    cost_series, expected_clan_size, lattice_delta_for, log_laplace_fixed_point,
    log_laplace_jacobian, subcriticality_gamma, weight_cost_curve, GammaScope, LogLaplaceForm,
    OffspringLaws, Verdict,
};
use kalikow::models::{
    lattice_preset, AgeBounds, AgeHawkes, AgeKernels, AgeSpec, ComponentRule, LatticePreset,
    LinearHawkes, NodeRule, TableModel,
};
use kalikow::stats::{histogram, ks_exponential, mean_and_se, total_variation};
use kalikow::weights::{AtomicFamily, ListedEntry, ListedFamily, Nesting, WeightFamily};
use kalikow::{
    backward_clan, forward_simulate, perfect_sample, perfect_sample_window, BackwardBudget,
    ForwardOptions, Interval, KalikowModel, Neighborhood, NodeId, PerfectError, RandomStream,
    StopReason,
};
use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::oracle::{ogata_count, ExpHawkes, RefractoryHawkes};

const POISSON_T_MAX: f64 = 1e4;
const POISSON_RATE_BAND: (f64, f64) = (0.98, 1.02);
const POISSON_KS_MIN_P: f64 = 0.01;
const POISSON_MAX_SECS: f64 = 10.0;

const THINNING_RUNS: u64 = 10_000;
const THINNING_WINDOW: f64 = 2.0;
const THINNING_BURN_IN_FACTOR: f64 = 50.0;
const THINNING_MAX_TV: f64 = 0.05;
const THINNING_MAX_SECS: f64 = 120.0;

const REFRACTORY_RUNS: u64 = 10_000;
const REFRACTORY_T_MAX: f64 = 2.0;
/// Nodes sampled jointly in every refractory run.
const REFRACTORY_NODES: [i64; 3] = [-1, 0, 1];
/// Mean offspring of the lattice preset used by the lattice suites.
const LATTICE_MEAN_OFFSPRING: f64 = 0.5;

const CLAN_RUNS: u64 = 10_000;
const CLAN_TARGET: f64 = 2.0;
const CLAN_MAX_REL_ERR: f64 = 0.05;
const CLAN_MAX_SECS: f64 = 60.0;
/// Listed neighborhoods per node in the two-node clan model.
const CLAN_ENTRIES: usize = 40;

const GATE_RUNS: u64 = 10_000;
const GATE_SUB_GAMMA: f64 = 0.25;
const GATE_SUPER_GAMMA: f64 = 1.25;
/// Smallest budget-hit fraction counted as detectable.
const GATE_MIN_HIT_FRACTION: f64 = 0.01;
const GATE_SUPER_RUNS: u64 = 1_000;
/// Budget of both gate runs; a surviving supercritical clan reaches it fast.
const GATE_BUDGET: BackwardBudget = BackwardBudget {
    max_generations: 10_000,
    max_points: 10_000,
};
/// Listed neighborhoods of the one-node gate model.
const GATE_ENTRIES: usize = 40;

const FORWARD_RUNS: u64 = 10_000;
const FORWARD_WINDOW: f64 = 2.0;
const FORWARD_MAX_TV: f64 = 0.05;
const FORWARD_MAX_SECS: f64 = 60.0;

const FIXED_POINT_MATRICES: usize = 200;
const FIXED_POINT_TOL: f64 = 1e-12;
const JACOBIAN_STEP: f64 = 1e-6;
const JACOBIAN_MAX_REL_ERR: f64 = 1e-5;

const WEIGHT_GAMMA: f64 = 4.0;
const WEIGHT_F4_TOL: f64 = 1e-6;
const WEIGHT_GRID: [f64; 5] = [3.2, 3.4, 3.6, 3.8, 4.0];

const TAIL_RUNS: u64 = 100_000;
const TAIL_OFFSETS: [f64; 4] = [2.0, 4.0, 6.0, 8.0];
const TAIL_SIGMAS: f64 = 3.0;
const TAIL_MAX_SECS: f64 = 300.0;

const SHIFT_RUNS: u64 = 1_000;
const SHIFT_T_MAX: f64 = 100.0;
const SHIFT_SIGMAS: f64 = 3.0;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("unknown suite `{name}`; available: {available}")]
    Unknown { name: String, available: String },
    #[error(transparent)]
    Model(#[from] kalikow::Error),
    #[error(transparent)]
    Perfect(#[from] PerfectError),
}

/// One observed quantity and the rule it is held to.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub label: String,
    pub observed: f64,
    pub threshold: String,
    pub passed: bool,
}

impl Check {
    fn new(label: impl Into<String>, observed: f64, threshold: impl Into<String>, passed: bool) -> Self {
        Check {
            label: label.into(),
            observed,
            threshold: threshold.into(),
            passed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub criterion: u8,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl SuiteReport {
    /// One line: verdict, then every check.
    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let checks: Vec<String> = self
            .checks
            .iter()
            .map(|c| {
                format!(
                    "{}{} = {} ({})",
                    if c.passed { "" } else { "!" },
                    c.label,
                    format_value(c.observed),
                    c.threshold
                )
            })
            .collect();
        format!(
            "criterion {:>2} {:<22} {verdict} [{:.1} s] {}",
            self.criterion,
            self.name,
            self.seconds,
            checks.join("; ")
        )
    }
}

fn format_value(x: f64) -> String {
    let a = x.abs();
    if x.fract() == 0.0 && a < 1e15 {
        format!("{x:.0}")
    } else if a < 1e-3 || a >= 1e6 {
        format!("{x:.4e}")
    } else {
        format!("{x:.6}")
    }
}

type SuiteFn = fn(u64) -> Result<Vec<Check>, SuiteError>;

/// Name, criterion number and body of every suite.
pub const SUITES: &[(&str, u8, SuiteFn)] = &[
    ("poisson-sanity", 1, poisson_sanity),
    ("thinning-equivalence", 2, thinning_equivalence),
    ("refractory", 3, refractory),
    ("clan-size", 4, clan_size),
    ("subcriticality-gate", 5, subcriticality_gate),
    ("forward-oracle", 6, forward_oracle),
    ("fixed-point", 7, fixed_point),
    ("weight-choice", 8, weight_choice),
    ("deviation-tail", 9, deviation_tail),
    ("stationarity", 10, stationarity),
];

pub fn suite_names() -> Vec<&'static str> {
    SUITES.iter().map(|s| s.0).collect()
}

pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport, SuiteError> {
    let Some(&(name, criterion, body)) = SUITES.iter().find(|s| s.0 == name) else {
        return Err(SuiteError::Unknown {
            name: name.to_string(),
            available: suite_names().join(", "),
        });
    };
    let start = Instant::now();
    let checks = body(seed)?;
    Ok(SuiteReport {
        name: name.to_string(),
        criterion,
        passed: checks.iter().all(|c| c.passed),
        checks,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn runtime_check(start: Instant, limit: f64) -> Check {
    let secs = start.elapsed().as_secs_f64();
    Check::new("seconds", secs, format!("< {limit}"), secs < limit)
}

/// Seeds of independent runs derived from one suite seed.
fn stream(seed: u64, run: u64) -> RandomStream {
    RandomStream::new(seed).child(run)
}

fn oracle_seed(seed: u64, run: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ run.wrapping_add(1 << 40)
}

/// `φ ≡ 1` under the bound `Γ = 2` with `λ(∅) = 1`.
pub fn constant_model() -> TableModel {
    TableModel::constant(NodeId(0), 1.0, 2.0).expect("valid constants")
}

fn poisson_sanity(seed: u64) -> Result<Vec<Check>, SuiteError> {
    let start = Instant::now();
    let m = constant_model();
    let run = perfect_sample(&m, NodeId(0), POISSON_T_MAX, &stream(seed, 0), BackwardBudget::default())?;
    let pts = run.points.points(NodeId(0));
    let rate = pts.len() as f64 / POISSON_T_MAX;
    let mut gaps = Vec::with_capacity(pts.len());
    let mut last = 0.0;
    for &t in pts {
        gaps.push(t - last);
        last = t;
    }
    let ks = ks_exponential(&gaps, 1.0)?;
    let (lo, hi) = POISSON_RATE_BAND;
    Ok(vec![
        Check::new("rate", rate, format!("in [{lo}, {hi}]"), (lo..=hi).contains(&rate)),
        Check::new("ks_p", ks.p_value, format!("> {POISSON_KS_MIN_P}"), ks.p_value > POISSON_KS_MIN_P),
        runtime_check(start, POISSON_MAX_SECS),
    ])
}

/// One node, `ψ(u) = 1 + u`, `h(t) = 0.5 e^{-4t}`, refractory period 0.25.
pub fn age_model() -> AgeHawkes {
    AgeHawkes::new(AgeSpec {
        nodes: kalikow::NodeSet::Finite(vec![NodeId(0)]),
        rate: kalikow::kernel::RateFunction::Affine {
            offset: 1.0,
            slope: 1.0,
        },
        per_node_rate: BTreeMap::new(),
        kernels: AgeKernels::Explicit {
            kernels: BTreeMap::from([(
                (NodeId(0), NodeId(0)),
                kalikow::kernel::Kernel::exponential(0.5, 4.0).expect("valid kernel"),
            )]),
        },
        delta: 0.25,
        nesting: Nesting::self_then_all(&[NodeId(0)]),
        bounds: AgeBounds::GammaBar,
    })
    .expect("valid age model")
}

fn thinning_equivalence(seed: u64) -> Result<Vec<Check>, SuiteError> {
    let start = Instant::now();
    let m = age_model();
    let gamma = m.total_bound(NodeId(0)).ok_or(kalikow::Error::MissingBound(NodeId(0)))?;
    let perfect: Vec<usize> = (0..THINNING_RUNS)
        .into_par_iter()
        .map(|k| {
            perfect_sample(&m, NodeId(0), THINNING_WINDOW, &stream(seed, k), BackwardBudget::default())
                .map(|r| r.points.len())
        })
        .collect::<Result<_, _>>()?;
    let oracle_model = RefractoryHawkes {
        delta: 0.25,
        offset: 1.0,
        slope: 1.0,
        a: 0.5,
        b: 4.0,
    };
    let burn_in = THINNING_BURN_IN_FACTOR / gamma;
    let oracle: Vec<usize> = (0..THINNING_RUNS)
        .into_par_iter()
        .map(|k| ogata_count(&oracle_model, burn_in, THINNING_WINDOW, oracle_seed(seed, k)))
        .collect();
    let tv = total_variation(&histogram(perfect), &histogram(oracle));
    Ok(vec![
        Check::new("total_variation", tv, format!("< {THINNING_MAX_TV}"), tv < THINNING_MAX_TV),
        runtime_check(start, THINNING_MAX_SECS),
    ])
}

/// The lattice preset with `p = γ = 4` and `δ` set for mean offspring 0.5.
pub fn lattice_model() -> Result<LatticePreset, kalikow::Error> {
    let delta = lattice_delta_for(4.0, 4.0, LATTICE_MEAN_OFFSPRING)?;
    lattice_preset(4.0, 4.0, delta)
}

fn refractory(seed: u64) -> Result<Vec<Check>, SuiteError> {
    let preset = lattice_model()?;
    let gamma = subcriticality_gamma(&preset.model, &GammaScope::for_model(&preset.model))?;
    let window: Vec<(NodeId, Interval)> = REFRACTORY_NODES
        .iter()
        .map(|&j| (NodeId(j), Interval::new(0.0, REFRACTORY_T_MAX).expect("valid window")))
        .collect();
    let delta = preset.delta;
    let (violations, points): (usize, usize) = (0..REFRACTORY_RUNS)
        .into_par_iter()
        .map(|k| {
            let run = perfect_sample_window(&preset.model, &window, &stream(seed, k), BackwardBudget::default())?;
            let bad = run
                .points
                .iter_nodes()
                .map(|(_, ts)| ts.windows(2).filter(|w| w[1] - w[0] <= delta).count())
                .sum::<usize>();
            Ok((bad, run.points.len()))
        })
        .collect::<Result<Vec<_>, SuiteError>>()?
        .into_iter()
        .fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(vec![
        Check::new("gamma", gamma.gamma, "< 1", gamma.verdict == Verdict::Subcritical),
        Check::new("points", points as f64, "> 0", points > 0),
        Check::new("gaps_le_delta", violations as f64, "= 0", violations == 0),
    ])
}

/// Two nodes with `Γ = 1` and mean matrix `[[0.2, 0.3], [0.1, 0.4]]`.
///
/// Each node has many equally likely neighborhoods with one short piece per
/// source at irregular lags, so that distinct clan points rarely draw
/// overlapping regions.
pub fn two_node_model(bound: f64) -> TableModel {
    let widths = [[0.2, 0.3], [0.1, 0.4]];
    let mut entries = BTreeMap::new();
    for (i, w) in widths.iter().enumerate() {
        let list: Vec<ListedEntry> = (0..CLAN_ENTRIES)
            .map(|c| {
                let c = c as f64 + 1.0;
                let lag0 = 1.0 + c * std::f64::consts::PI * 3.0 + i as f64 * 0.71;
                let lag1 = 2.0 + c * std::f64::consts::E * 3.7 + i as f64 * 1.37;
                ListedEntry {
                    weight: 1.0 / CLAN_ENTRIES as f64,
                    neighborhood: Neighborhood::new([
                        (NodeId(0), Interval::new(-lag0 - w[0], -lag0).expect("valid piece")),
                        (NodeId(1), Interval::new(-lag1 - w[1], -lag1).expect("valid piece")),
                    ])
                    .expect("pieces lie in the past"),
                }
            })
            .collect();
        entries.insert(NodeId(i as i64), list);
    }
    let rule = NodeRule {
        bound,
        component: ComponentRule::Constant { value: 0.5 * bound },
    };
    TableModel::new(
        BTreeMap::from([(NodeId(0), rule), (NodeId(1), rule)]),
        WeightFamily::Listed(ListedFamily { entries }),
    )
    .expect("valid two-node model")
}

fn clan_sizes(model: &dyn KalikowModel, node: NodeId, runs: u64, seed: u64, budget: BackwardBudget) -> Vec<Option<usize>> {
    (0..runs)
        .into_par_iter()
        .map(|k| match backward_clan(model, node, 0.0, &stream(seed, k), budget) {
            Ok(g) => Some(g.size()),
            Err(_) => None,
        })
        .collect()
}

fn clan_size(seed: u64) -> Result<Vec<Check>, SuiteError> {
    let start = Instant::now();
    let m = two_node_model(1.0);
    let matrix = kalikow::branching_matrix(&m, &[NodeId(0), NodeId(1)])?;
    let predicted = expected_clan_size(&matrix, 0)?;
    let sizes = clan_sizes(&m, NodeId(0), CLAN_RUNS, seed, BackwardBudget::default());
    let done: Vec<f64> = sizes.iter().flatten().map(|&s| s as f64).collect();
    let (mean, _) = mean_and_se(&done);
    let rel = (mean - CLAN_TARGET).abs() / CLAN_TARGET;
    Ok(vec![
        Check::new("predicted", predicted, format!("= {CLAN_TARGET}"), (predicted - CLAN_TARGET).abs() < 1e-12),
        Check::new("terminated", done.len() as f64, format!("= {CLAN_RUNS}"), done.len() as u64 == CLAN_RUNS),
        Check::new("mean_clan_size", mean, format!("within {CLAN_MAX_REL_ERR} rel of {CLAN_TARGET}"), rel < CLAN_MAX_REL_ERR),
        runtime_check(start, CLAN_MAX_SECS),
    ])
}

/// One node, `λ(∅) = 1/2` and `λ(w_n) = 2^{-(n+1)}` with `ε = 0.5`, under
/// the bound `Γ`; `γ = Γ/4`.
pub fn atomic_model(bound: f64) -> TableModel {
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
    .expect("valid atomic model")
}

/// One node with equally likely pieces of length 0.25 at spread lags under
/// the bound `Γ`; `γ = Γ/4`.
///
/// Unlike [`atomic_model`], whose neighborhoods all crowd the recent past so
/// that the shared ledger keeps every clan small, distinct clan points here
/// rarely share a region and a supercritical clan can survive.
pub fn spread_model(bound: f64) -> TableModel {
    let list: Vec<ListedEntry> = (0..GATE_ENTRIES)
        .map(|c| {
            let lag = 1.0 + (c as f64 + 1.0) * std::f64::consts::PI;
            ListedEntry {
                weight: 1.0 / GATE_ENTRIES as f64,
                neighborhood: Neighborhood::new([(
                    NodeId(0),
                    Interval::new(-lag - 0.25, -lag).expect("valid piece"),
                )])
                .expect("piece lies in the past"),
            }
        })
        .collect();
    TableModel::new(
        BTreeMap::from([(
            NodeId(0),
            NodeRule {
                bound,
                component: ComponentRule::Constant { value: 0.5 * bound },
            },
        )]),
        WeightFamily::Listed(ListedFamily {
            entries: BTreeMap::from([(NodeId(0), list)]),
        }),
    )
    .expect("valid spread model")
}

fn subcriticality_gate(seed: u64) -> Result<Vec<Check>, SuiteError> {
    let sub = spread_model(1.0);
    let sup = spread_model(5.0);
    let g_sub = subcriticality_gamma(&sub, &GammaScope::for_model(&sub))?;
    let g_sup = subcriticality_gamma(&sup, &GammaScope::for_model(&sup))?;
    let done = clan_sizes(&sub, NodeId(0), GATE_RUNS, seed, GATE_BUDGET)
        .iter()
        .filter(|s| s.is_some())
        .count();
    let hits = clan_sizes(&sup, NodeId(0), GATE_SUPER_RUNS, seed ^ 1, GATE_BUDGET)
        .iter()
        .filter(|s| s.is_none())
        .count();
    let frac = hits as f64 / GATE_SUPER_RUNS as f64;
    Ok(vec![
        Check::new("gamma_sub", g_sub.gamma, format!("= {GATE_SUB_GAMMA}"), (g_sub.gamma - GATE_SUB_GAMMA).abs() < 1e-9 && g_sub.verdict == Verdict::Subcritical),
        Check::new("terminated_fraction", done as f64 / GATE_RUNS as f64, "= 1", done as u64 == GATE_RUNS),
        Check::new("gamma_super", g_sup.gamma, format!("= {GATE_SUPER_GAMMA}, supercritical"), (g_sup.gamma - GATE_SUPER_GAMMA).abs() < 1e-9 && g_sup.verdict == Verdict::Supercritical),
        Check::new("budget_hit_fraction", frac, format!(">= {GATE_MIN_HIT_FRACTION}"), frac >= GATE_MIN_HIT_FRACTION),
    ])
}

/// `μ = 1`, `h(t) = 0.5 e^{-t}` with `ε = 0.5` and bin ratio 0.7.
pub fn linear_model() -> LinearHawkes {
    LinearHawkes::new(
        BTreeMap::from([(NodeId(0), 1.0)]),
        BTreeMap::from([(
            (NodeId(0), NodeId(0)),
            kalikow::kernel::Kernel::exponential(0.5, 1.0).expect("valid kernel"),
        )]),
        0.5,
        0.5,
        0.7,
    )
    .expect("valid linear model")
}

fn forward_oracle(seed: u64) -> Result<Vec<Check>, SuiteError> {
    let start = Instant::now();
    let m = linear_model();
    let opts = ForwardOptions::new(FORWARD_WINDOW, u64::MAX);
    let runs: Vec<(usize, bool)> = (0..FORWARD_RUNS)
        .into_par_iter()
        .map(|k| {
            forward_simulate(&m, &[NodeId(0)], &opts, &mut stream(seed, k))
                .map(|r| (r.accepted.len(), r.stop_reason == StopReason::TimeReached))
        })
        .collect::<Result<_, _>>()?;
    let complete = runs.iter().all(|r| r.1);
    let oracle_model = ExpHawkes { mu: 1.0, a: 0.5, b: 1.0 };
    let oracle: Vec<usize> = (0..FORWARD_RUNS)
        .into_par_iter()
        .map(|k| ogata_count(&oracle_model, 0.0, FORWARD_WINDOW, oracle_seed(seed, k)))
        .collect();
    let tv = total_variation(&histogram(runs.iter().map(|r| r.0)), &histogram(oracle));
    Ok(vec![
        Check::new("runs_reaching_t_max", runs.iter().filter(|r| r.1).count() as f64, format!("= {FORWARD_RUNS}"), complete),
        Check::new("total_variation", tv, format!("< {FORWARD_MAX_TV}"), tv < FORWARD_MAX_TV),
        runtime_check(start, FORWARD_MAX_SECS),
    ])
}

/// Random nonnegative matrix with row sums in `(0, 0.9)`.
fn random_subcritical(rng: &mut StdRng, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let target = rng.random_range(0.05..0.9);
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        for j in 0..n {
            m[(i, j)] = target * raw[j] / total;
        }
    }
    m
}

fn fixed_point(seed: u64) -> Result<Vec<Check>, SuiteError> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst_residual: f64 = 0.0;
    let mut worst_jac: f64 = 0.0;
    for trial in 0..FIXED_POINT_MATRICES {
        let n = 1 + trial % 4;
        let m = random_subcritical(&mut rng, n);
        let laws = OffspringLaws::poisson(&m)?;
        let theta: Vec<f64> = (0..n).map(|_| rng.random_range(-0.05..0.002)).collect();
        let state = log_laplace_fixed_point(&laws, &theta, FIXED_POINT_TOL, LogLaplaceForm::Mixture)?;
        worst_residual = worst_residual.max(state.residual);
        let jac = log_laplace_jacobian(&laws, JACOBIAN_STEP, LogLaplaceForm::Mixture)?;
        let exact = (DMatrix::identity(n, n) - &m)
            .try_inverse()
            .ok_or_else(|| kalikow::Error::Invariant("singular Id - M".into()))?;
        for (a, b) in jac.iter().zip(exact.iter()) {
            worst_jac = worst_jac.max((a - b).abs() / b.abs().max(1e-300));
        }
    }
    let zero = log_laplace_fixed_point(
        &OffspringLaws::poisson(&random_subcritical(&mut rng, 3))?,
        &[0.0; 3],
        FIXED_POINT_TOL,
        LogLaplaceForm::Mixture,
    )?;
    let zero_ok = zero.fixed_point.iter().all(|&v| v == 0.0);
    Ok(vec![
        Check::new("max_residual", worst_residual, format!("< {FIXED_POINT_TOL}"), worst_residual < FIXED_POINT_TOL),
        Check::new("max_jacobian_rel_err", worst_jac, format!("< {JACOBIAN_MAX_REL_ERR}"), worst_jac < JACOBIAN_MAX_REL_ERR),
        Check::new("phi_at_zero", if zero_ok { 0.0 } else { 1.0 }, "= 0 exactly", zero_ok),
    ])
}

fn weight_choice(_seed: u64) -> Result<Vec<Check>, SuiteError> {
    let z = |s: f64| kalikow::series::zeta(s).expect("s > 1");
    let f4 = cost_series(4.0)?;
    let closed = 2.0 * z(2.0) - z(3.0);
    let err = (f4.value - closed).abs();
    let p3 = cost_series(3.0).is_err();
    let delta = lattice_delta_for(WEIGHT_GAMMA, WEIGHT_GAMMA, LATTICE_MEAN_OFFSPRING)?;
    let curve = weight_cost_curve(WEIGHT_GAMMA, delta, &WEIGHT_GRID)?;
    let argmin = curve.argmin.unwrap_or(f64::NAN);
    Ok(vec![
        Check::new("f4_error", err, format!("< {WEIGHT_F4_TOL}"), err < WEIGHT_F4_TOL),
        Check::new("p3_divergent", if p3 { 1.0 } else { 0.0 }, "= 1", p3),
        Check::new("argmin_p", argmin, format!("= {WEIGHT_GAMMA}"), argmin == WEIGHT_GAMMA),
    ])
}

fn deviation_tail(seed: u64) -> Result<Vec<Check>, SuiteError> {
    let start = Instant::now();
    let m = two_node_model(1.0);
    let sizes = clan_sizes(&m, NodeId(0), TAIL_RUNS, seed, BackwardBudget::default());
    let done: Vec<usize> = sizes.iter().flatten().copied().collect();
    let n = done.len() as f64;
    let mut logs = Vec::new();
    let mut ses = Vec::new();
    for x in TAIL_OFFSETS {
        let level = CLAN_TARGET + x;
        let count = done.iter().filter(|&&w| w as f64 > level).count() as f64;
        let p = count / n;
        logs.push(p.ln());
        ses.push(((1.0 - p) / (n * p)).sqrt());
    }
    let mut checks = vec![Check::new(
        "terminated",
        n,
        format!("= {TAIL_RUNS}"),
        done.len() as u64 == TAIL_RUNS,
    )];
    for k in 0..logs.len() - 1 {
        let d = logs[k + 1] - logs[k];
        checks.push(Check::new(
            format!("dlog_tail[{}->{}]", TAIL_OFFSETS[k], TAIL_OFFSETS[k + 1]),
            d,
            "< 0",
            d < 0.0,
        ));
    }
    for k in 0..logs.len() - 2 {
        let d2 = logs[k + 2] - 2.0 * logs[k + 1] + logs[k];
        let se = (ses[k].powi(2) + 4.0 * ses[k + 1].powi(2) + ses[k + 2].powi(2)).sqrt();
        checks.push(Check::new(
            format!("d2log_tail[{}]", TAIL_OFFSETS[k + 1]),
            d2,
            format!("<= {TAIL_SIGMAS} se = {:.4}", TAIL_SIGMAS * se),
            d2 <= TAIL_SIGMAS * se,
        ));
    }
    checks.push(runtime_check(start, TAIL_MAX_SECS));
    Ok(checks)
}

fn stationarity(seed: u64) -> Result<Vec<Check>, SuiteError> {
    let preset = lattice_model()?;
    let half = SHIFT_T_MAX / 2.0;
    let diffs: Vec<f64> = (0..SHIFT_RUNS)
        .into_par_iter()
        .map(|k| {
            let run = perfect_sample(&preset.model, NodeId(0), SHIFT_T_MAX, &stream(seed, k), BackwardBudget::default())?;
            let pts = run.points.points(NodeId(0));
            let first = pts.iter().filter(|&&t| t < half).count() as f64;
            let second = pts.len() as f64 - first;
            Ok((first - second) / half)
        })
        .collect::<Result<_, SuiteError>>()?;
    let (mean, se) = mean_and_se(&diffs);
    Ok(vec![Check::new(
        "rate_difference",
        mean,
        format!("|.| < {SHIFT_SIGMAS} se = {:.4}", SHIFT_SIGMAS * se),
        mean.abs() < SHIFT_SIGMAS * se,
    )])
}
