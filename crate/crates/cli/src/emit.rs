//! Point files and batch summaries.
//!
//! Points go to CSV with header `time,node`, sorted by time, times written
//! with 17 significant digits so that reading them back is exact.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use kalikow::{Configuration, NodeId, RootSummary};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}, record {record}: {message}")]
    Malformed {
        path: PathBuf,
        record: usize,
        message: String,
    },
    #[error("cannot serialize summary: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    time: String,
    node: i64,
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> EmitError + '_ {
    move |source| EmitError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn create_parent(path: &Path) -> Result<(), EmitError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).map_err(|source| EmitError::Io {
                path: dir.to_path_buf(),
                source,
            })
        }
        _ => Ok(()),
    }
}

/// `t` with 17 significant digits.
pub fn format_time(t: f64) -> String {
    format!("{t:.16e}")
}

/// Writes `(time, node)` rows sorted by time, then node.
pub fn write_points(path: &Path, points: &[(f64, NodeId)]) -> Result<(), EmitError> {
    let mut rows = points.to_vec();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    // serde skips the header when there are no rows
    w.write_record(["time", "node"]).map_err(csv_err(path))?;
    for (t, n) in rows {
        w.write_record([format_time(t), n.0.to_string()])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| EmitError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_configuration(path: &Path, x: &Configuration) -> Result<(), EmitError> {
    write_points(path, &x.sorted_points())
}

/// Reads a file written by [`write_points`].
pub fn read_points(path: &Path) -> Result<Vec<(f64, NodeId)>, EmitError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = r.headers().map_err(csv_err(path))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["time", "node"] {
        return Err(EmitError::Malformed {
            path: path.to_path_buf(),
            record: 0,
            message: format!("header must be time,node, got {}", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for (k, row) in r.deserialize::<Row>().enumerate() {
        let row = row.map_err(csv_err(path))?;
        let t: f64 = row.time.parse().map_err(|e| EmitError::Malformed {
            path: path.to_path_buf(),
            record: k + 1,
            message: format!("time `{}`: {e}", row.time),
        })?;
        out.push((t, NodeId(row.node)));
    }
    Ok(out)
}

/// Point file of run `run` out of `runs`: `path` itself for a single run,
/// `<stem>-<run>.<ext>` otherwise.
pub fn run_path(path: &Path, run: u64, runs: u64) -> PathBuf {
    if runs <= 1 {
        return path.to_path_buf();
    }
    let width = (runs - 1).to_string().len();
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("points");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    path.with_file_name(format!("{stem}-{run:0width$}.{ext}"))
}

/// `<stem>.summary.json` next to the point files.
pub fn summary_path(points: &Path) -> PathBuf {
    let stem = points.file_stem().and_then(|s| s.to_str()).unwrap_or("points");
    points.with_file_name(format!("{stem}.summary.json"))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub count: usize,
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub median: Option<f64>,
    pub q90: Option<f64>,
    pub q99: Option<f64>,
    pub max: Option<f64>,
}

impl Distribution {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Distribution::default();
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| v[((p * (v.len() - 1) as f64).round() as usize).min(v.len() - 1)];
        Distribution {
            count: v.len(),
            mean: Some(v.iter().sum::<f64>() / v.len() as f64),
            min: Some(v[0]),
            median: Some(q(0.5)),
            q90: Some(q(0.9)),
            q99: Some(q(0.99)),
            max: Some(v[v.len() - 1]),
        }
    }
}

/// Clan statistics of the roots examined by one perfect run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClanStats {
    pub roots: usize,
    /// Roots already decided by an earlier clan.
    pub reused: usize,
    pub mean_size: Option<f64>,
    pub max_size: usize,
    pub max_lookback: f64,
}

impl ClanStats {
    pub fn of(roots: &[RootSummary]) -> Self {
        let fresh: Vec<&RootSummary> = roots.iter().filter(|r| !r.reused).collect();
        ClanStats {
            roots: roots.len(),
            reused: roots.len() - fresh.len(),
            mean_size: (!fresh.is_empty())
                .then(|| fresh.iter().map(|r| r.clan_size as f64).sum::<f64>() / fresh.len() as f64),
            max_size: fresh.iter().map(|r| r.clan_size).max().unwrap_or(0),
            max_lookback: fresh.iter().map(|r| r.lookback).fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Termination {
    Completed { stop: String },
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: u64,
    /// Root seed; the run draws from its child stream `stream`.
    pub seed: u64,
    pub stream: Vec<u64>,
    pub points_file: Option<PathBuf>,
    pub count: usize,
    /// Points per unit time and node.
    pub rate: f64,
    pub termination: Termination,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub clans: Option<ClanStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub command: String,
    pub family: String,
    pub seed: u64,
    pub t_max: f64,
    pub runs: Vec<RunRecord>,
    pub completed: usize,
    pub failed: usize,
    pub counts: Distribution,
    pub rates: Distribution,
    /// Perfect runs only: clan sizes of all fresh roots.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub clan_size_histogram: BTreeMap<usize, usize>,
    /// Perfect runs only: lookback of all fresh roots.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lookback: Option<Distribution>,
}

impl BatchSummary {
    pub fn new(command: &str, family: &str, seed: u64, t_max: f64, runs: Vec<RunRecord>) -> Self {
        let done: Vec<&RunRecord> = runs
            .iter()
            .filter(|r| matches!(r.termination, Termination::Completed { .. }))
            .collect();
        let counts: Vec<f64> = done.iter().map(|r| r.count as f64).collect();
        let rates: Vec<f64> = done.iter().map(|r| r.rate).collect();
        BatchSummary {
            command: command.into(),
            family: family.into(),
            seed,
            t_max,
            completed: done.len(),
            failed: runs.len() - done.len(),
            counts: Distribution::of(&counts),
            rates: Distribution::of(&rates),
            runs,
            clan_size_histogram: BTreeMap::new(),
            lookback: None,
        }
    }

    /// Adds the clan statistics of the fresh roots of every perfect run.
    pub fn with_roots<'a>(mut self, roots: impl IntoIterator<Item = &'a RootSummary>) -> Self {
        let mut lookbacks = Vec::new();
        for r in roots.into_iter().filter(|r| !r.reused) {
            *self.clan_size_histogram.entry(r.clan_size).or_insert(0) += 1;
            lookbacks.push(r.lookback);
        }
        self.lookback = Some(Distribution::of(&lookbacks));
        self
    }

    pub fn write(&self, path: &Path) -> Result<(), EmitError> {
        create_parent(path)?;
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|source| EmitError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}
