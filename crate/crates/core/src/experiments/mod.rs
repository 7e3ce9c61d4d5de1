//! Config-driven experiments behind the `nilwalk` binary.
//!
//! Each runner returns a [`RunOutput`]; [`write_outputs`] stores its CSV (and
//! JSON, when present) next to a `summary.json` holding the SHA-256 of the
//! config bytes, `git describe` and the run's metrics. CSV contents depend
//! only on the config and seed, never on the worker count.

mod exact;
mod graph_io;
mod runners;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::albanese::AlbaneseError;
use crate::group_algebra::AlgebraError;
use crate::quotient_graph::{
    heisenberg_cayley, hexagonal, z1_biased, z1_subdivided, zd_lattice, zd_weighted, GraphError,
    VoltageGraph,
};
use crate::rate_functions::RateError;
use crate::walker::{ScalingSequence, WalkError};

pub use exact::{lattice_steps, AxisMixture, ExactLatticeDistribution, DP_BUDGET};
pub use graph_io::{algebra_to_json, graph_to_json, ingest_graph, parse_algebra, parse_graph};
pub use runners::{run_albanese, run_clt, run_lil, run_lln, run_mdp, run_rate};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("I/O: {0}")]
    Io(String),
    #[error("config: {0}")]
    Config(String),
    #[error("schema error at '{pointer}': {message}")]
    Schema { pointer: String, message: String },
    #[error("exact oracle unavailable: {0}")]
    OracleUnavailable(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Albanese(#[from] AlbaneseError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Rate(#[from] RateError),
}

fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

/// Where the graph comes from: a named preset with parameters, or a JSON
/// file (relative paths resolve against the config file's directory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSource {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default)]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingName {
    Power,
    Lil,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSpec {
    pub kind: ScalingName,
    #[serde(default)]
    pub theta: Option<f64>,
}

impl Default for ScalingSpec {
    fn default() -> Self {
        ScalingSpec {
            kind: ScalingName::Power,
            theta: Some(0.75),
        }
    }
}

impl ScalingSpec {
    pub fn sequence(&self) -> Result<ScalingSequence, ExperimentError> {
        Ok(match self.kind {
            ScalingName::Power => ScalingSequence::power(
                self.theta
                    .ok_or_else(|| config_err("power scaling needs 'theta'"))?,
            )?,
            ScalingName::Lil => ScalingSequence::lil(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Sublevel `I∞ ≤ lil_level` tested by the LIL scatter.
    pub lil_level: f64,
    /// Slack added to `lil_level`.
    pub lil_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            lil_level: 1.0,
            lil_tol: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdpMode {
    /// Exact enumeration; abelian single-vertex quotients only.
    #[default]
    Exact,
    /// Empirical tail frequencies; qualitative when tails are small.
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LilSpec {
    pub trajectories: usize,
    /// First recorded `n`; the grid is `n_min · 2^k ≤ n_max`.
    pub n_min: u64,
    pub n_max: u64,
    pub knots: usize,
    pub restarts: usize,
}

impl Default for LilSpec {
    fn default() -> Self {
        LilSpec {
            trajectories: 20,
            n_min: 1_000,
            n_max: 10_000_000,
            knots: 8,
            restarts: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateSpec {
    /// Log-coordinates of the target group element.
    pub target: Vec<f64>,
    pub knots: usize,
    pub restarts: usize,
    /// Use the limit group law (`I∞`) instead of the original one.
    pub limit: bool,
    /// Precomputed Albanese JSON; computed from the graph when absent.
    pub albanese: Option<PathBuf>,
}

impl Default for RateSpec {
    fn default() -> Self {
        RateSpec {
            target: Vec::new(),
            knots: 8,
            restarts: 8,
            limit: false,
            albanese: None,
        }
    }
}

fn default_samples() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    /// Algebra for graph files without an `algebra` block.
    #[serde(default)]
    pub algebra: Option<Value>,
    #[serde(default)]
    pub scaling: ScalingSpec,
    #[serde(default)]
    pub n_grid: Vec<u64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub delta: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub start: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub mdp: MdpMode,
    #[serde(default)]
    pub lil: LilSpec,
    #[serde(default)]
    pub rate: RateSpec,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    /// Parses and validates config text.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, ExperimentError> {
        let mut cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; returns it with the SHA-256 of its bytes.
    pub fn load(path: &Path) -> Result<(Self, String), ExperimentError> {
        let bytes = std::fs::read(path)
            .map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok((Self::from_json(text, base)?, sha256_hex(&bytes)))
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if let Some(i) = (1..self.n_grid.len()).find(|&i| self.n_grid[i] <= self.n_grid[i - 1]) {
            return Err(config_err(format!("n_grid is not increasing at index {i}")));
        }
        if self.samples == 0 {
            return Err(config_err("samples must be at least 1"));
        }
        if let Some(d) = self.delta.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(config_err(format!("delta {d} is not positive")));
        }
        self.scaling.sequence()?;
        if self.lil.trajectories == 0 {
            return Err(config_err("lil.trajectories must be at least 1"));
        }
        if self.lil.n_min < crate::walker::LIL_MIN_N || self.lil.n_max < self.lil.n_min {
            return Err(config_err(format!(
                "lil range [{}, {}] is empty or starts below {}",
                self.lil.n_min,
                self.lil.n_max,
                crate::walker::LIL_MIN_N
            )));
        }
        match (&self.graph.preset, &self.graph.file) {
            (Some(_), None) | (None, Some(_)) => Ok(()),
            _ => Err(config_err("graph needs exactly one of 'preset' or 'file'")),
        }
    }

    fn param(&self, name: &str) -> Result<f64, ExperimentError> {
        self.graph
            .params
            .get(name)
            .and_then(Value::as_f64)
            .ok_or_else(|| config_err(format!("preset parameter '{name}' is missing or not a number")))
    }

    /// Builds the configured graph.
    pub fn graph(&self) -> Result<VoltageGraph, ExperimentError> {
        if let Some(file) = &self.graph.file {
            let fallback = self
                .algebra
                .as_ref()
                .map(|a| parse_algebra(a, "/algebra"))
                .transpose()?;
            return ingest_graph(&self.base_dir.join(file), fallback.as_ref());
        }
        let name = self.graph.preset.as_deref().unwrap_or_default();
        Ok(match name {
            "zd_lattice" => {
                let d = self.param("d")?;
                if !(d >= 1.0 && d.fract() == 0.0) {
                    return Err(config_err(format!("zd_lattice needs a positive integer d, got {d}")));
                }
                zd_lattice(d as usize)?
            }
            "z1_srw" => zd_lattice(1)?,
            "z1_biased" => z1_biased(self.param("q")?)?,
            "zd_weighted" => {
                let probs = self
                    .graph
                    .params
                    .get("probs")
                    .and_then(Value::as_array)
                    .ok_or_else(|| config_err("zd_weighted needs 'probs': [[p+, p-], ...]"))?
                    .iter()
                    .map(|pair| match pair.as_array().map(|a| a.as_slice()) {
                        Some([a, b]) => a.as_f64().zip(b.as_f64()),
                        _ => None,
                    })
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| config_err("zd_weighted 'probs' entries must be [p+, p-]"))?;
                zd_weighted(&probs)?
            }
            "hexagonal" => hexagonal(),
            "heisenberg_cayley" => heisenberg_cayley(),
            "z1_subdivided" => z1_subdivided(),
            other => return Err(config_err(format!("unknown preset '{other}'"))),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// `git describe --always --dirty`, or `"unknown"` outside a repository.
pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    Albanese,
    Lln,
    Clt,
    Mdp,
    Lil,
    Rate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Albanese => "albanese",
            Experiment::Lln => "lln",
            Experiment::Clt => "clt",
            Experiment::Mdp => "mdp",
            Experiment::Lil => "lil",
            Experiment::Rate => "rate",
        }
    }

    pub fn run(self, cfg: &ExperimentConfig) -> Result<RunOutput, ExperimentError> {
        match self {
            Experiment::Albanese => run_albanese(cfg),
            Experiment::Lln => run_lln(cfg),
            Experiment::Clt => run_clt(cfg),
            Experiment::Mdp => run_mdp(cfg),
            Experiment::Lil => run_lil(cfg),
            Experiment::Rate => run_rate(cfg),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a runner produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub name: &'static str,
    pub csv: Option<String>,
    pub json: Option<Value>,
    pub metrics: Value,
}

/// Writes `<name>.csv`, `<name>.json` (when present) and `summary.json`
/// into `dir`, creating it if needed. Returns the written paths.
pub fn write_outputs(
    dir: &Path,
    out: &RunOutput,
    config_hash: &str,
) -> Result<Vec<PathBuf>, ExperimentError> {
    let io = |p: &Path, e: std::io::Error| ExperimentError::Io(format!("{}: {e}", p.display()));
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, contents: String| -> Result<(), ExperimentError> {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|e| io(&path, e))?;
        written.push(path);
        Ok(())
    };
    if let Some(csv) = &out.csv {
        put(format!("{}.csv", out.name), csv.clone())?;
    }
    if let Some(j) = &out.json {
        put(format!("{}.json", out.name), pretty(j))?;
    }
    let summary = json!({
        "experiment": out.name,
        "config_hash": config_hash,
        "git_describe": git_describe(),
        "metrics": out.metrics,
    });
    put("summary.json".into(), pretty(&summary))?;
    Ok(written)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}
