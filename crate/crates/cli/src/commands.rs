//! Subcommands of the `kalikow` binary.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use kalikow::analysis::{log_laplace_jacobian, LogLaplaceForm};
use kalikow::{
    branching_summary, forward_simulate, log_laplace_fixed_point, perfect_sample,
    perfect_sample_window, weight_cost_curve, BranchingSummary, ForwardOptions, GammaScope,
    Interval, LogLaplaceState, NodeId, NodeSet, OffspringLaws, PerfectError, RandomStream,
};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{load_config, ConfigError, ModelSpec, RunConfig};
use crate::emit::{
    run_path, summary_path, write_configuration, BatchSummary, ClanStats, RunRecord, Termination,
};
use crate::suites::{run_suite, suite_names, SuiteError, SuiteReport};

/// Convergence tolerance of the log-Laplace fixed point.
const FIXED_POINT_TOL: f64 = 1e-12;
/// Finite-difference step of the reported Jacobian.
const JACOBIAN_STEP: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "kalikow", version, about = "Simulate and analyze point processes through their Kalikow decompositions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact simulation from the empty past on a finite set of nodes.
    SimulateForward(ForwardArgs),
    /// Stationary sample by backward clans and forward acceptance.
    SimulatePerfect(PerfectArgs),
    /// Branching matrix, subcriticality, expected clan size and cost curve.
    Analyze(AnalyzeArgs),
    /// Run a validation suite (`all` runs every suite).
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub runs: Option<u64>,
    /// Point file; batches write `<stem>-<run>.csv` plus `<stem>.summary.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ForwardArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub n_max: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PerfectArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub node: Option<i64>,
    /// Writes the region ledger of every run to this JSON file.
    #[arg(long)]
    pub dump_ledger: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Restrict to the first N nodes (nodes 0..N of a lattice).
    #[arg(long, conflicts_with = "invariant")]
    pub nodes: Option<usize>,
    /// Use the translation-invariant reduction.
    #[arg(long)]
    pub invariant: bool,
    /// θ for the log-Laplace fixed point: one value, or one per node.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = FormArg::Mixture)]
    pub form: FormArg,
    /// Weight exponents `p` for the lattice cost curve.
    #[arg(long, value_delimiter = ',')]
    pub p_grid: Option<Vec<f64>>,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum FormArg {
    Mixture,
    Factorized,
}

impl From<FormArg> for LogLaplaceForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Mixture => LogLaplaceForm::Mixture,
            FormArg::Factorized => LogLaplaceForm::Factorized,
        }
    }
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub suite: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid arguments: {0}")]
    Usage(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Validation(_) | CliError::Runtime(_) => 1,
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::SimulateForward(a) => simulate_forward(a),
        Command::SimulatePerfect(a) => simulate_perfect(a),
        Command::Analyze(a) => analyze(a),
        Command::Validate(a) => validate(a),
    }
}

/// Config with the command-line overrides applied and range-checked.
fn load(run: &RunArgs) -> Result<RunConfig, CliError> {
    let mut c = load_config(&run.config)?;
    if let Some(t) = run.t_max {
        if !(t.is_finite() && t > 0.0) {
            return Err(CliError::Usage(format!("--t-max must be finite and > 0, got {t}")));
        }
        c.simulation.t_max = t;
    }
    if let Some(s) = run.seed {
        c.rng.seed = s;
    }
    if let Some(r) = run.runs {
        if r == 0 {
            return Err(CliError::Usage("--runs must be >= 1".into()));
        }
        c.rng.runs = r;
    }
    if let Some(o) = &run.out {
        c.output.points = o.clone();
        c.output.summary = None;
    }
    Ok(c)
}

fn summary_file(c: &RunConfig) -> PathBuf {
    c.output
        .summary
        .clone()
        .unwrap_or_else(|| summary_path(&c.output.points))
}

fn simulate_forward(a: ForwardArgs) -> Result<(), CliError> {
    let mut c = load(&a.run)?;
    if let Some(n) = a.n_max {
        if n == 0 {
            return Err(CliError::Usage("--n-max must be >= 1".into()));
        }
        c.simulation.n_max = n;
    }
    let nodes = c.forward_nodes().ok_or_else(|| {
        CliError::Usage("forward simulation needs simulation.nodes for an infinite network".into())
    })?;
    let options = ForwardOptions {
        t_max: c.simulation.t_max,
        n_max: c.simulation.n_max,
        guard: c.simulation.guard,
        lookahead: c.simulation.lookahead.unwrap_or(f64::INFINITY),
    };
    let root = RandomStream::new(c.rng.seed);
    let runs = c.rng.runs;
    let results: Vec<_> = (0..runs)
        .into_par_iter()
        .map(|k| forward_simulate(c.model.as_ref(), &nodes, &options, &mut root.child(k)))
        .collect();
    let mut records = Vec::with_capacity(results.len());
    for (k, r) in (0..runs).zip(results) {
        let run = r.map_err(|e| anyhow::anyhow!("run {k}: {e}"))?;
        let file = run_path(&c.output.points, k, runs);
        write_configuration(&file, &run.accepted).map_err(anyhow::Error::from)?;
        records.push(RunRecord {
            run: k,
            seed: c.rng.seed,
            stream: vec![k],
            points_file: Some(file),
            count: run.accepted_count(),
            rate: run.accepted_count() as f64 / (c.simulation.t_max * nodes.len() as f64),
            termination: Termination::Completed {
                stop: serde_json::to_value(&run.stop_reason)
                    .ok()
                    .and_then(|v| v.get("kind").and_then(|k| k.as_str()).map(str::to_owned))
                    .unwrap_or_default(),
            },
            clans: None,
        });
    }
    let summary = BatchSummary::new(
        "simulate-forward",
        c.spec.name(),
        c.rng.seed,
        c.simulation.t_max,
        records,
    );
    summary.write(&summary_file(&c)).map_err(anyhow::Error::from)?;
    eprintln!(
        "{} run(s), mean count {:.4}",
        summary.completed,
        summary.counts.mean.unwrap_or(0.0)
    );
    Ok(())
}

fn simulate_perfect(a: PerfectArgs) -> Result<(), CliError> {
    let mut c = load(&a.run)?;
    if let Some(n) = a.node {
        if !c.model.nodes().contains(NodeId(n)) {
            return Err(CliError::Usage(format!("--node {n} is not part of the model")));
        }
        c.simulation.node = NodeId(n);
        c.simulation.window = None;
    }
    let window: Vec<(NodeId, Interval)> = match &c.simulation.window {
        Some(w) => w
            .iter()
            .map(|p| (p.node, Interval { start: p.start, end: p.end }))
            .collect(),
        None => vec![(
            c.simulation.node,
            Interval {
                start: 0.0,
                end: c.simulation.t_max,
            },
        )],
    };
    let needs_bound: Vec<NodeId> = match c.model.nodes() {
        NodeSet::Finite(all) => all,
        NodeSet::Integers => window.iter().map(|(j, _)| *j).collect(),
    };
    if let Some(j) = needs_bound.iter().find(|&&j| c.model.total_bound(j).is_none()) {
        return Err(CliError::Usage(format!(
            "the {} family has no total bound for node {j}; perfect simulation needs bounded components",
            c.spec.name()
        )));
    }
    let total_length: f64 = window.iter().map(|(_, iv)| iv.len()).sum();
    let root = RandomStream::new(c.rng.seed);
    let runs = c.rng.runs;
    let budget = c.simulation.budget;
    let results: Vec<_> = (0..runs)
        .into_par_iter()
        .map(|k| {
            let rng = root.child(k);
            match &c.simulation.window {
                Some(_) => perfect_sample_window(c.model.as_ref(), &window, &rng, budget),
                None => perfect_sample(c.model.as_ref(), c.simulation.node, c.simulation.t_max, &rng, budget),
            }
        })
        .collect();
    let mut records = Vec::with_capacity(results.len());
    let mut all_roots = Vec::new();
    for (k, r) in (0..runs).zip(results) {
        match r {
            Ok(run) => {
                let file = run_path(&c.output.points, k, runs);
                write_configuration(&file, &run.points).map_err(anyhow::Error::from)?;
                if let Some(d) = &a.dump_ledger {
                    write_json(&run_path(d, k, runs), &run.ledger)?;
                }
                records.push(RunRecord {
                    run: k,
                    seed: c.rng.seed,
                    stream: vec![k],
                    points_file: Some(file),
                    count: run.points.len(),
                    rate: run.points.len() as f64 / total_length,
                    termination: Termination::Completed {
                        stop: "all-roots-decided".into(),
                    },
                    clans: Some(ClanStats::of(&run.roots)),
                });
                all_roots.extend(run.roots);
            }
            Err(PerfectError::Budget { reason, .. }) => records.push(RunRecord {
                run: k,
                seed: c.rng.seed,
                stream: vec![k],
                points_file: None,
                count: 0,
                rate: 0.0,
                termination: Termination::Failed { reason },
                clans: None,
            }),
            Err(PerfectError::Model(e)) => return Err(anyhow::anyhow!("run {k}: {e}").into()),
        }
    }
    let summary = BatchSummary::new(
        "simulate-perfect",
        c.spec.name(),
        c.rng.seed,
        c.simulation.t_max,
        records,
    )
    .with_roots(&all_roots);
    summary.write(&summary_file(&c)).map_err(anyhow::Error::from)?;
    eprintln!(
        "{} of {} run(s) completed, mean count {:.4}",
        summary.completed,
        runs,
        summary.counts.mean.unwrap_or(0.0)
    );
    if summary.failed > 0 {
        return Err(anyhow::anyhow!(
            "{} run(s) exhausted the backward budget (see {})",
            summary.failed,
            summary_file(&c).display()
        )
        .into());
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(anyhow::Error::from)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(anyhow::Error::from)?;
    std::fs::write(path, text + "\n").map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct FixedPointReport {
    form: LogLaplaceForm,
    #[serde(flatten)]
    state: LogLaplaceState,
    jacobian_at_zero: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct AnalysisReport {
    family: String,
    branching: BranchingSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    fixed_point: Option<FixedPointReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cost_curve: Option<kalikow::analysis::CostCurve>,
}

fn analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let c = load_config(&a.config)?;
    let model = c.model.as_ref();
    let scope = if a.invariant {
        if !matches!(model.nodes(), NodeSet::Integers) {
            return Err(CliError::Usage("--invariant needs a translation-invariant (lattice) model".into()));
        }
        GammaScope::Invariant {
            representative: NodeId(0),
        }
    } else {
        match (model.nodes(), a.nodes) {
            (NodeSet::Finite(all), n) => GammaScope::Nodes {
                nodes: all.into_iter().take(n.unwrap_or(usize::MAX)).collect(),
            },
            (NodeSet::Integers, Some(n)) => GammaScope::Nodes {
                nodes: (0..n as i64).map(NodeId).collect(),
            },
            (NodeSet::Integers, None) => GammaScope::for_model(model),
        }
    };
    if let GammaScope::Nodes { nodes } = &scope {
        if nodes.is_empty() {
            return Err(CliError::Usage("--nodes must select at least one node".into()));
        }
    }
    let branching = branching_summary(model, &scope).map_err(|e| match e {
        kalikow::Error::MissingBound(i) => anyhow::anyhow!(
            "node {i} has no total bound Γ; branching analysis needs bounded components"
        ),
        e => e.into(),
    })?;
    let fixed_point = match &a.theta {
        None => None,
        Some(theta) => {
            let GammaScope::Nodes { nodes } = &scope else {
                return Err(CliError::Usage("--theta needs a finite node set (use --nodes)".into()));
            };
            let theta = match theta.len() {
                1 => vec![theta[0]; nodes.len()],
                n if n == nodes.len() => theta.clone(),
                n => {
                    return Err(CliError::Usage(format!(
                        "--theta has {n} values for {} nodes",
                        nodes.len()
                    )))
                }
            };
            let laws = OffspringLaws::from_model(model, nodes).map_err(anyhow::Error::from)?;
            let form = a.form.into();
            let state = log_laplace_fixed_point(&laws, &theta, FIXED_POINT_TOL, form)
                .map_err(anyhow::Error::from)?;
            let jac = log_laplace_jacobian(&laws, JACOBIAN_STEP, form).map_err(anyhow::Error::from)?;
            Some(FixedPointReport {
                form,
                state,
                jacobian_at_zero: jac.row_iter().map(|r| r.iter().copied().collect()).collect(),
            })
        }
    };
    let cost_curve = match (&a.p_grid, &c.spec) {
        (None, _) => None,
        (Some(grid), ModelSpec::Lattice { gamma, delta, .. }) => {
            Some(weight_cost_curve(*gamma, *delta, grid).map_err(anyhow::Error::from)?)
        }
        (Some(_), _) => return Err(CliError::Usage("--p-grid applies to the lattice family only".into())),
    };
    let report = AnalysisReport {
        family: c.spec.name().into(),
        branching,
        fixed_point,
        cost_curve,
    };
    match &a.out {
        Some(p) => write_json(p, &report)?,
        None => print_stdout(&serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?)?,
    }
    Ok(())
}

/// Prints a line, treating a closed pipe as success.
fn print_stdout(text: &str) -> Result<(), CliError> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(anyhow::Error::from(e).into()),
        _ => Ok(()),
    }
}

fn print_report(r: &SuiteReport) -> Result<(), CliError> {
    print_stdout(&r.line())
}

fn validate(a: ValidateArgs) -> Result<(), CliError> {
    let names: Vec<&str> = if a.suite == "all" {
        suite_names()
    } else {
        vec![a.suite.as_str()]
    };
    let mut failed = Vec::new();
    for name in names {
        match run_suite(name, a.seed) {
            Ok(r) => {
                print_report(&r)?;
                if !r.passed {
                    failed.push(r.name.to_string());
                }
            }
            Err(e @ SuiteError::Unknown { .. }) => return Err(CliError::Usage(e.to_string())),
            Err(e) => return Err(anyhow::anyhow!("suite {name}: {e}").into()),
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(failed.join(", ")))
    }
}
