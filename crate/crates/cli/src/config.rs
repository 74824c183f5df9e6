//! JSON run configurations.
//!
//! A file has four sections: `model` (required), `simulation`, `rng` and
//! `output`. Parsing is done by serde; range checks then collect every
//! violation before the model is built.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use kalikow::kernel::{AnalyticRate, Kernel, RateFunction};
use kalikow::models::{
    lattice_preset, AgeBounds, AgeHawkes, AgeKernels, AgeSpec, AnalyticHawkes, ComponentRule,
    Coupling, GalvesLocherbach, LinearHawkes, NodeRule, TableModel,
};
use kalikow::weights::{AtomicFamily, LevelLaw, ListedEntry, ListedFamily, Nesting, WeightFamily};
use kalikow::{BackwardBudget, Interval, KalikowModel, Neighborhood, NodeId, NodeSet, SubspaceGuard};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

/// Tolerance on weight vectors summing to one.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub constraint: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.constraint)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {} violation(s)\n{}", .violations.len(), list(.violations))]
    Invalid {
        path: PathBuf,
        violations: Vec<Violation>,
    },
}

fn list(vs: &[Violation]) -> String {
    vs.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n")
}

/// Node-keyed map; JSON object keys are strings, so they are parsed here.
fn node_map<'de, D, T>(d: D) -> Result<BTreeMap<NodeId, T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    BTreeMap::<String, T>::deserialize(d)?
        .into_iter()
        .map(|(k, v)| match k.trim().parse::<i64>() {
            Ok(n) => Ok((NodeId(n), v)),
            Err(_) => Err(D::Error::custom(format!("node key `{k}` is not an integer"))),
        })
        .collect()
}

/// Nested sets `ω^i_k` of the age and GL families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NestingSpec {
    /// `sets[i][k-1] = ω^i_k`.
    Explicit {
        #[serde(deserialize_with = "node_map")]
        sets: BTreeMap<NodeId, Vec<Vec<NodeId>>>,
    },
}

impl NestingSpec {
    fn to_nesting(&self) -> Nesting {
        match self {
            NestingSpec::Explicit { sets } => Nesting::Explicit { sets: sets.clone() },
        }
    }
}

/// `(node, [start, end))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Piece {
    pub node: NodeId,
    pub start: f64,
    pub end: f64,
}

// flattening rules out deny_unknown_fields here
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelEntry {
    pub target: NodeId,
    pub source: NodeId,
    #[serde(flatten)]
    pub kernel: Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceEntry {
    pub target: NodeId,
    pub source: NodeId,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableNode {
    pub node: NodeId,
    pub bound: f64,
    pub component: ComponentRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ListedSpec {
    pub node: NodeId,
    pub weight: f64,
    #[serde(default)]
    pub pieces: Vec<Piece>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TableWeights {
    Listed {
        entries: Vec<ListedSpec>,
    },
    Atomic {
        epsilon: f64,
        empty: f64,
        ratio: f64,
        sources: Vec<SourceEntry>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingEntry {
    pub target: NodeId,
    pub source: NodeId,
    pub weight: f64,
    pub threshold: f64,
}

fn default_empty_weight() -> f64 {
    0.5
}
fn default_bin_ratio() -> f64 {
    0.5
}
fn default_epsilon() -> f64 {
    1.0
}
fn default_lattice_exponent() -> f64 {
    4.0
}
fn default_one() -> f64 {
    1.0
}
fn default_level_law() -> LevelLaw {
    LevelLaw::Geometric { ratio: 0.5 }
}

/// Model families addressable by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Homogeneous Poisson process of rate `rate` on one node.
    Constant {
        rate: f64,
        #[serde(default)]
        node: NodeId,
    },
    Table {
        nodes: Vec<TableNode>,
        weights: TableWeights,
    },
    Linear {
        #[serde(deserialize_with = "node_map")]
        baseline: BTreeMap<NodeId, f64>,
        #[serde(default)]
        kernels: Vec<KernelEntry>,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default = "default_empty_weight")]
        empty_weight: f64,
        #[serde(default = "default_bin_ratio")]
        bin_ratio: f64,
    },
    Age {
        nodes: Vec<NodeId>,
        rate: RateFunction,
        #[serde(default, deserialize_with = "node_map")]
        per_node_rate: BTreeMap<NodeId, RateFunction>,
        #[serde(default)]
        kernels: Vec<KernelEntry>,
        delta: f64,
        /// Defaults to the node itself, then all nodes.
        #[serde(default)]
        nesting: Option<NestingSpec>,
        #[serde(default = "default_age_bounds")]
        bounds: AgeBounds,
    },
    Analytic {
        #[serde(deserialize_with = "node_map")]
        rates: BTreeMap<NodeId, AnalyticRate>,
        #[serde(default)]
        kernels: Vec<KernelEntry>,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default = "default_bin_ratio")]
        order_ratio: f64,
        #[serde(default = "default_bin_ratio")]
        bin_ratio: f64,
    },
    Gl {
        nodes: Vec<NodeId>,
        rate: RateFunction,
        #[serde(default)]
        couplings: Vec<CouplingEntry>,
        delta: f64,
        #[serde(default)]
        nesting: Option<NestingSpec>,
        #[serde(default = "default_empty_weight")]
        empty_weight: f64,
        #[serde(default = "default_level_law")]
        law: LevelLaw,
    },
    /// Lattice `Z` with couplings `1/(2|j-i|^gamma)` and weights `∝ k^{-p}`.
    Lattice {
        #[serde(default = "default_lattice_exponent")]
        gamma: f64,
        #[serde(default = "default_lattice_exponent")]
        p: f64,
        #[serde(default = "default_one")]
        delta: f64,
    },
}

impl ModelSpec {
    /// Family name as written in the config.
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Constant { .. } => "constant",
            ModelSpec::Table { .. } => "table",
            ModelSpec::Linear { .. } => "linear",
            ModelSpec::Age { .. } => "age",
            ModelSpec::Analytic { .. } => "analytic",
            ModelSpec::Gl { .. } => "gl",
            ModelSpec::Lattice { .. } => "lattice",
        }
    }
}

fn default_age_bounds() -> AgeBounds {
    AgeBounds::GammaBar
}

fn default_t_max() -> f64 {
    10.0
}
fn default_n_max() -> u64 {
    1_000_000
}
fn default_guard() -> SubspaceGuard {
    SubspaceGuard::None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_n_max")]
    pub n_max: u64,
    #[serde(default)]
    pub budget: BackwardBudget,
    /// Node sampled by `simulate-perfect`.
    #[serde(default)]
    pub node: NodeId,
    /// Nodes simulated by `simulate-forward`; all nodes when absent.
    #[serde(default)]
    pub nodes: Option<Vec<NodeId>>,
    /// Window of `simulate-perfect`; `node × [0, t_max]` when absent.
    #[serde(default)]
    pub window: Option<Vec<Piece>>,
    #[serde(default = "default_guard")]
    pub guard: SubspaceGuard,
    /// Window covered by each forward bound; the remaining horizon when absent.
    #[serde(default)]
    pub lookahead: Option<f64>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            t_max: default_t_max(),
            n_max: default_n_max(),
            budget: BackwardBudget::default(),
            node: NodeId(0),
            nodes: None,
            window: None,
            guard: SubspaceGuard::None,
            lookahead: None,
        }
    }
}

fn default_runs() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: u64,
}

impl Default for RngSection {
    fn default() -> Self {
        RngSection { seed: 0, runs: 1 }
    }
}

fn default_points_path() -> PathBuf {
    PathBuf::from("points.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Point file; batches write `<stem>-<run>.csv` next to it.
    #[serde(default = "default_points_path")]
    pub points: PathBuf,
    /// Batch summary; defaults to `<stem>.summary.json`.
    #[serde(default)]
    pub summary: Option<PathBuf>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            points: default_points_path(),
            summary: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub rng: RngSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// A validated configuration together with its model.
pub struct RunConfig {
    pub spec: ModelSpec,
    pub model: Box<dyn KalikowModel>,
    pub simulation: SimulationSection,
    pub rng: RngSection,
    pub output: OutputSection,
}

impl fmt::Debug for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RunConfig")
            .field("spec", &self.spec)
            .field("model", &self.model.family_name())
            .field("simulation", &self.simulation)
            .field("rng", &self.rng)
            .field("output", &self.output)
            .finish()
    }
}

impl RunConfig {
    /// Nodes for forward simulation: the configured list or every node of a
    /// finite model.
    pub fn forward_nodes(&self) -> Option<Vec<NodeId>> {
        match (&self.simulation.nodes, self.model.nodes()) {
            (Some(n), _) => Some(n.clone()),
            (None, NodeSet::Finite(n)) => Some(n),
            (None, NodeSet::Integers) => None,
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text).map_err(|e| match e {
        Parsed::Syntax(message) => ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        },
        Parsed::Invalid(violations) => ConfigError::Invalid {
            path: path.to_path_buf(),
            violations,
        },
    })
}

#[derive(Debug)]
pub enum Parsed {
    Syntax(String),
    Invalid(Vec<Violation>),
}

pub fn parse_config(text: &str) -> Result<RunConfig, Parsed> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| Parsed::Syntax(e.to_string()))?;
    let mut v = Checker::default();
    check_model(&raw.model, &mut v);
    check_simulation(&raw.simulation, &mut v);
    if raw.rng.runs == 0 {
        v.push("rng.runs", "must be >= 1");
    }
    if !v.0.is_empty() {
        return Err(Parsed::Invalid(v.0));
    }
    let model = build_model(&raw.model).map_err(|e| {
        Parsed::Invalid(vec![Violation {
            field: "model".into(),
            constraint: e.to_string(),
        }])
    })?;
    let nodes = model.nodes();
    let mut v = Checker::default();
    let mut check_node = |field: String, n: NodeId| {
        if !nodes.contains(n) {
            v.push(&field, format!("node {n} is not part of the model"));
        }
    };
    check_node("simulation.node".into(), raw.simulation.node);
    for (k, n) in raw.simulation.nodes.iter().flatten().enumerate() {
        check_node(format!("simulation.nodes[{k}]"), *n);
    }
    for (k, p) in raw.simulation.window.iter().flatten().enumerate() {
        check_node(format!("simulation.window[{k}].node"), p.node);
    }
    if !v.0.is_empty() {
        return Err(Parsed::Invalid(v.0));
    }
    Ok(RunConfig {
        spec: raw.model,
        model,
        simulation: raw.simulation,
        rng: raw.rng,
        output: raw.output,
    })
}

#[derive(Default)]
struct Checker(Vec<Violation>);

impl Checker {
    fn push(&mut self, field: &str, constraint: impl Into<String>) {
        self.0.push(Violation {
            field: field.to_string(),
            constraint: constraint.into(),
        });
    }

    fn positive(&mut self, field: &str, x: f64) {
        if !(x.is_finite() && x > 0.0) {
            self.push(field, format!("must be finite and > 0, got {x}"));
        }
    }

    fn nonnegative(&mut self, field: &str, x: f64) {
        if !(x.is_finite() && x >= 0.0) {
            self.push(field, format!("must be finite and >= 0, got {x}"));
        }
    }

    fn probability(&mut self, field: &str, x: f64) {
        if !(0.0..=1.0).contains(&x) {
            self.push(field, format!("must lie in [0, 1], got {x}"));
        }
    }

    /// Weight sums per group.
    fn sums_to_one(&mut self, field: &str, sums: BTreeMap<NodeId, f64>) {
        for (i, s) in sums {
            if (s - 1.0).abs() > WEIGHT_SUM_TOL {
                self.push(&format!("{field}[node {i}]"), format!("weights sum to {s}, not 1"));
            }
        }
    }

    fn kernel(&mut self, field: &str, k: &Kernel) {
        match k {
            Kernel::Exponential { scale, rate } => {
                self.nonnegative(&format!("{field}.scale"), *scale);
                self.positive(&format!("{field}.rate"), *rate);
            }
            Kernel::Step { width, values } => {
                self.positive(&format!("{field}.width"), *width);
                for (m, x) in values.iter().enumerate() {
                    self.nonnegative(&format!("{field}.values[{m}]"), *x);
                }
            }
        }
    }

    fn kernels(&mut self, entries: &[KernelEntry]) {
        for (k, e) in entries.iter().enumerate() {
            self.kernel(&format!("model.kernels[{k}]"), &e.kernel);
        }
    }

    fn rate(&mut self, field: &str, r: &RateFunction) {
        match *r {
            RateFunction::Affine { offset, slope } => {
                self.nonnegative(&format!("{field}.offset"), offset);
                self.nonnegative(&format!("{field}.slope"), slope);
            }
            RateFunction::Saturating { offset, slope, cap } => {
                self.nonnegative(&format!("{field}.offset"), offset);
                self.nonnegative(&format!("{field}.slope"), slope);
                self.nonnegative(&format!("{field}.cap"), cap);
            }
        }
    }

    fn level_law(&mut self, field: &str, law: &LevelLaw) {
        match law {
            LevelLaw::PowerLaw { exponent } => {
                if !(exponent.is_finite() && *exponent > 1.0) {
                    self.push(&format!("{field}.exponent"), format!("must exceed 1, got {exponent}"));
                }
            }
            LevelLaw::Geometric { ratio } => {
                if !(0.0..1.0).contains(ratio) {
                    self.push(&format!("{field}.ratio"), format!("must lie in [0, 1), got {ratio}"));
                }
            }
            LevelLaw::Tabulated { head, tail } => {
                for (k, x) in head.iter().enumerate() {
                    self.nonnegative(&format!("{field}.head[{k}]"), *x);
                }
                for (k, (c, rho)) in tail.iter().enumerate() {
                    self.nonnegative(&format!("{field}.tail[{k}].coefficient"), *c);
                    if !(0.0..1.0).contains(rho) {
                        self.push(&format!("{field}.tail[{k}].ratio"), "must lie in [0, 1)");
                    }
                }
            }
        }
    }
}

fn check_model(m: &ModelSpec, v: &mut Checker) {
    match m {
        ModelSpec::Constant { rate, .. } => v.nonnegative("model.rate", *rate),
        ModelSpec::Table { nodes, weights } => {
            if nodes.is_empty() {
                v.push("model.nodes", "at least one node is required");
            }
            for (k, n) in nodes.iter().enumerate() {
                v.positive(&format!("model.nodes[{k}].bound"), n.bound);
                match n.component {
                    ComponentRule::Constant { value } => {
                        v.nonnegative(&format!("model.nodes[{k}].component.value"), value);
                        if value > n.bound {
                            v.push(&format!("model.nodes[{k}].component.value"), "must not exceed the bound");
                        }
                    }
                    ComponentRule::Excitation { base, per_point } => {
                        v.nonnegative(&format!("model.nodes[{k}].component.base"), base);
                        v.nonnegative(&format!("model.nodes[{k}].component.per_point"), per_point);
                    }
                }
            }
            match weights {
                TableWeights::Listed { entries } => {
                    let mut sums = BTreeMap::new();
                    for (k, e) in entries.iter().enumerate() {
                        v.probability(&format!("model.weights.entries[{k}].weight"), e.weight);
                        *sums.entry(e.node).or_insert(0.0) += e.weight;
                        for (m, p) in e.pieces.iter().enumerate() {
                            if !(p.start < p.end && p.end <= 0.0) {
                                v.push(
                                    &format!("model.weights.entries[{k}].pieces[{m}]"),
                                    "must satisfy start < end <= 0",
                                );
                            }
                        }
                    }
                    v.sums_to_one("model.weights.entries", sums);
                }
                TableWeights::Atomic {
                    epsilon,
                    empty,
                    ratio,
                    sources,
                } => {
                    v.positive("model.weights.epsilon", *epsilon);
                    v.probability("model.weights.empty", *empty);
                    v.probability("model.weights.ratio", *ratio);
                    check_sources("model.weights.sources", sources, v);
                }
            }
        }
        ModelSpec::Linear {
            baseline,
            kernels,
            epsilon,
            empty_weight,
            bin_ratio,
        } => {
            for (i, mu) in baseline {
                v.nonnegative(&format!("model.baseline[{i}]"), *mu);
            }
            v.kernels(kernels);
            v.positive("model.epsilon", *epsilon);
            v.probability("model.empty_weight", *empty_weight);
            v.probability("model.bin_ratio", *bin_ratio);
        }
        ModelSpec::Age {
            nodes,
            rate,
            per_node_rate,
            kernels,
            delta,
            ..
        } => {
            if nodes.is_empty() {
                v.push("model.nodes", "at least one node is required");
            }
            v.rate("model.rate", rate);
            for (i, r) in per_node_rate {
                v.rate(&format!("model.per_node_rate[{i}]"), r);
            }
            v.kernels(kernels);
            v.positive("model.delta", *delta);
        }
        ModelSpec::Analytic {
            kernels,
            epsilon,
            order_ratio,
            bin_ratio,
            ..
        } => {
            v.kernels(kernels);
            v.positive("model.epsilon", *epsilon);
            v.probability("model.order_ratio", *order_ratio);
            v.probability("model.bin_ratio", *bin_ratio);
        }
        ModelSpec::Gl {
            nodes,
            rate,
            couplings,
            delta,
            empty_weight,
            law,
            ..
        } => {
            if nodes.is_empty() {
                v.push("model.nodes", "at least one node is required");
            }
            v.rate("model.rate", rate);
            for (k, c) in couplings.iter().enumerate() {
                v.nonnegative(&format!("model.couplings[{k}].weight"), c.weight);
                v.nonnegative(&format!("model.couplings[{k}].threshold"), c.threshold);
            }
            v.positive("model.delta", *delta);
            v.probability("model.empty_weight", *empty_weight);
            v.level_law("model.law", law);
        }
        ModelSpec::Lattice { gamma, p, delta } => {
            if !(gamma.is_finite() && *gamma > 1.0) {
                v.push("model.gamma", format!("must exceed 1, got {gamma}"));
            }
            if !(p.is_finite() && *p > 1.0) {
                v.push("model.p", format!("must exceed 1, got {p}"));
            } else if p > gamma {
                v.push("model.p", "must not exceed gamma");
            }
            v.positive("model.delta", *delta);
        }
    }
}

fn check_sources(field: &str, sources: &[SourceEntry], v: &mut Checker) {
    let mut sums = BTreeMap::new();
    for (k, s) in sources.iter().enumerate() {
        v.probability(&format!("{field}[{k}].weight"), s.weight);
        *sums.entry(s.target).or_insert(0.0) += s.weight;
    }
    v.sums_to_one(field, sums);
}

fn check_simulation(s: &SimulationSection, v: &mut Checker) {
    v.positive("simulation.t_max", s.t_max);
    if s.n_max == 0 {
        v.push("simulation.n_max", "must be >= 1");
    }
    if s.budget.max_generations == 0 {
        v.push("simulation.budget.max_generations", "must be >= 1");
    }
    if s.budget.max_points == 0 {
        v.push("simulation.budget.max_points", "must be >= 1");
    }
    if let Some(l) = s.lookahead {
        v.positive("simulation.lookahead", l);
    }
    if let Some(nodes) = &s.nodes {
        if nodes.is_empty() {
            v.push("simulation.nodes", "must not be empty");
        }
    }
    for (k, p) in s.window.iter().flatten().enumerate() {
        if !(p.start.is_finite() && p.end.is_finite() && p.start < p.end) {
            v.push(&format!("simulation.window[{k}]"), "must satisfy finite start < end");
        }
    }
    match s.guard {
        SubspaceGuard::RefractoryGap { delta } => v.positive("simulation.guard.delta", delta),
        SubspaceGuard::ActivityCap { horizon, cap } => {
            v.positive("simulation.guard.horizon", horizon);
            if cap == 0 {
                v.push("simulation.guard.cap", "must be >= 1");
            }
        }
        SubspaceGuard::DriveCap { cap } => v.positive("simulation.guard.cap", cap),
        SubspaceGuard::None | SubspaceGuard::SummableIntensity => {}
    }
}

fn kernel_matrix(entries: &[KernelEntry]) -> BTreeMap<(NodeId, NodeId), Kernel> {
    entries
        .iter()
        .map(|e| ((e.target, e.source), e.kernel.clone()))
        .collect()
}

fn source_lists(sources: &[SourceEntry]) -> BTreeMap<NodeId, Vec<(NodeId, f64)>> {
    let mut out: BTreeMap<NodeId, Vec<(NodeId, f64)>> = BTreeMap::new();
    for s in sources {
        out.entry(s.target).or_default().push((s.source, s.weight));
    }
    out
}

/// Builds the model described by `spec`.
pub fn build_model(spec: &ModelSpec) -> kalikow::Result<Box<dyn KalikowModel>> {
    Ok(match spec {
        ModelSpec::Constant { rate, node } => {
            // the bound must be positive even for a silent node
            Box::new(TableModel::constant(*node, *rate, rate.max(f64::MIN_POSITIVE))?)
        }
        ModelSpec::Table { nodes, weights } => {
            let rules: BTreeMap<NodeId, NodeRule> = nodes
                .iter()
                .map(|n| {
                    (
                        n.node,
                        NodeRule {
                            bound: n.bound,
                            component: n.component,
                        },
                    )
                })
                .collect();
            let family = match weights {
                TableWeights::Listed { entries } => {
                    let mut map: BTreeMap<NodeId, Vec<ListedEntry>> = BTreeMap::new();
                    for e in entries {
                        let nb = Neighborhood::new(
                            e.pieces.iter().map(|p| (p.node, Interval { start: p.start, end: p.end })),
                        )?;
                        map.entry(e.node).or_default().push(ListedEntry {
                            weight: e.weight,
                            neighborhood: nb,
                        });
                    }
                    WeightFamily::Listed(ListedFamily { entries: map })
                }
                TableWeights::Atomic {
                    epsilon,
                    empty,
                    ratio,
                    sources,
                } => WeightFamily::Atomic(AtomicFamily {
                    epsilon: *epsilon,
                    empty: *empty,
                    ratio: *ratio,
                    sources: source_lists(sources),
                }),
            };
            Box::new(TableModel::new(rules, family)?)
        }
        ModelSpec::Linear {
            baseline,
            kernels,
            epsilon,
            empty_weight,
            bin_ratio,
        } => Box::new(LinearHawkes::new(
            baseline.clone(),
            kernel_matrix(kernels),
            *epsilon,
            *empty_weight,
            *bin_ratio,
        )?),
        ModelSpec::Age {
            nodes,
            rate,
            per_node_rate,
            kernels,
            delta,
            nesting,
            bounds,
        } => Box::new(AgeHawkes::new(AgeSpec {
            nodes: NodeSet::Finite(nodes.clone()),
            rate: *rate,
            per_node_rate: per_node_rate.clone(),
            kernels: AgeKernels::Explicit {
                kernels: kernel_matrix(kernels),
            },
            delta: *delta,
            nesting: nesting
                .as_ref()
                .map_or_else(|| Nesting::self_then_all(nodes), NestingSpec::to_nesting),
            bounds: bounds.clone(),
        })?),
        ModelSpec::Analytic {
            rates,
            kernels,
            epsilon,
            order_ratio,
            bin_ratio,
        } => Box::new(AnalyticHawkes::new(
            rates.clone(),
            kernel_matrix(kernels),
            *epsilon,
            *order_ratio,
            *bin_ratio,
        )?),
        ModelSpec::Gl {
            nodes,
            rate,
            couplings,
            delta,
            nesting,
            empty_weight,
            law,
        } => Box::new(GalvesLocherbach::new(
            nodes.clone(),
            *rate,
            couplings
                .iter()
                .map(|c| {
                    (
                        (c.target, c.source),
                        Coupling {
                            weight: c.weight,
                            threshold: c.threshold,
                        },
                    )
                })
                .collect(),
            *delta,
            nesting
                .as_ref()
                .map_or_else(|| Nesting::self_then_all(nodes), NestingSpec::to_nesting),
            *empty_weight,
            law.clone(),
        )?),
        ModelSpec::Lattice { gamma, p, delta } => Box::new(lattice_preset(*gamma, *p, *delta)?.model),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn invalid(text: &str) -> Vec<Violation> {
        match parse_config(text) {
            Err(Parsed::Invalid(v)) => v,
            other => panic!("expected violations, got {other:?}"),
        }
    }

    #[test]
    fn minimal_constant_config_gets_defaults() {
        let c = parse_config(r#"{"model": {"family": "constant", "rate": 1.0}}"#).unwrap();
        assert_eq!(c.model.family_name(), "table");
        assert_eq!(c.simulation, SimulationSection::default());
        assert_eq!(c.rng, RngSection::default());
        assert_eq!(c.simulation.budget, BackwardBudget::default());
        assert_eq!(c.forward_nodes(), Some(vec![NodeId(0)]));
    }

    #[test]
    fn negative_epsilon_names_field_and_constraint() {
        let v = invalid(
            r#"{"model": {"family": "linear", "baseline": {"0": 1.0}, "epsilon": -0.1,
                "kernels": [{"target": 0, "source": 0, "kind": "exponential", "scale": 0.5, "rate": 1.0}]}}"#,
        );
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "model.epsilon");
        assert!(v[0].constraint.contains("> 0"), "{}", v[0].constraint);
    }

    #[test]
    fn all_violations_are_reported() {
        let v = invalid(
            r#"{"model": {"family": "gl", "nodes": [0, 1], "rate": {"kind": "affine", "offset": -1, "slope": 1},
                "delta": 0, "empty_weight": 2},
                "simulation": {"t_max": -1}, "rng": {"runs": 0}}"#,
        );
        let fields: Vec<&str> = v.iter().map(|x| x.field.as_str()).collect();
        for f in ["model.rate.offset", "model.delta", "model.empty_weight", "simulation.t_max", "rng.runs"] {
            assert!(fields.contains(&f), "{f} missing from {fields:?}");
        }
    }

    #[test]
    fn unknown_family_is_a_parse_error() {
        match parse_config(r#"{"model": {"family": "nope"}}"#) {
            Err(Parsed::Syntax(m)) => assert!(m.contains("nope"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_field_is_a_parse_error() {
        match parse_config(r#"{"model": {"family": "age", "nodes": [0], "delta": 1}}"#) {
            Err(Parsed::Syntax(m)) => assert!(m.contains("rate"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn weights_must_sum_to_one() {
        let v = invalid(
            r#"{"model": {"family": "table",
                "nodes": [{"node": 0, "bound": 1, "component": {"kind": "constant", "value": 0.5}}],
                "weights": {"kind": "listed", "entries": [
                    {"node": 0, "weight": 0.5},
                    {"node": 0, "weight": 0.4, "pieces": [{"node": 0, "start": -1, "end": 0}]}]}}}"#,
        );
        assert_eq!(v.len(), 1);
        assert!(v[0].constraint.contains("sum"), "{}", v[0].constraint);
    }

    #[test]
    fn lattice_expands_to_power_law_couplings() {
        let c = parse_config(r#"{"model": {"family": "lattice", "gamma": 4, "p": 4, "delta": 1}}"#).unwrap();
        assert!(matches!(c.model.nodes(), NodeSet::Integers));
        let kernels = AgeKernels::LatticePowerLaw {
            exponent: 4.0,
            decay: 1.0,
        };
        for d in 1..5i64 {
            match kernels.kernel(NodeId(3), NodeId(3 + d)) {
                Some(Kernel::Exponential { scale, .. }) => {
                    assert!((scale - 1.0 / (2.0 * (d as f64).powi(4))).abs() < 1e-15)
                }
                other => panic!("{other:?}"),
            }
        }
        assert!(c.forward_nodes().is_none());
        let c = parse_config(r#"{"model": {"family": "lattice"}}"#).unwrap();
        assert_eq!(c.spec, ModelSpec::Lattice { gamma: 4.0, p: 4.0, delta: 1.0 });
    }

    #[test]
    fn node_outside_model_is_rejected() {
        let v = invalid(r#"{"model": {"family": "constant", "rate": 1}, "simulation": {"node": 3}}"#);
        assert_eq!(v[0].field, "simulation.node");
    }

    #[test]
    fn model_constructor_errors_become_violations() {
        // kernel from node 1 without a baseline for node 1
        let v = invalid(
            r#"{"model": {"family": "linear", "baseline": {"0": 1.0},
                "kernels": [{"target": 0, "source": 1, "kind": "exponential", "scale": 0.5, "rate": 1.0}]}}"#,
        );
        assert_eq!(v[0].field, "model");
    }
}
