//! TOML configuration schema, command-line overrides and bundled presets.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calib::{SensorTrue, StepSchedule, Theta};
use crate::error::{Error, Result};
use crate::graph::WeightedDigraph;
use crate::signal::{ArcParam, NoiseDist, NoiseSpec, SignalKind, SignalModel};
use crate::sim::{random_sensors, Algorithm, PinnedNode, SensorDraw, SimConfig};
use crate::spectral::DEFAULT_NULL_TOL;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub graph: GraphSection,
    #[serde(default)]
    pub sensors: SensorSection,
    pub signal: SignalSection,
    #[serde(default)]
    pub noise: NoiseSection,
    pub algorithm: AlgorithmSection,
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub pinned: Vec<PinnedSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    /// `random`, `complete`, `ring`, `edges` or `file`.
    pub kind: String,
    pub n: Option<usize>,
    pub edge_prob: Option<f64>,
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default)]
    pub seed: u64,
    /// Random graphs: require this node to reach all others.
    pub root: Option<usize>,
    /// Edge-list file, relative to the config file.
    pub path: Option<PathBuf>,
    /// `[from, to, weight]` triples.
    pub arcs: Option<Vec<(usize, usize, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    /// `random` or `list`.
    #[serde(default = "random_kind")]
    pub kind: String,
    #[serde(default = "one")]
    pub alpha_mean: f64,
    #[serde(default = "default_param_var")]
    pub alpha_var: f64,
    #[serde(default)]
    pub beta_mean: f64,
    #[serde(default = "default_param_var")]
    pub beta_var: f64,
    #[serde(default = "default_min_alpha")]
    pub min_abs_alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
    /// Individual sensors forced to given characteristics after drawing.
    #[serde(default)]
    pub set: Vec<SensorOverride>,
}

impl Default for SensorSection {
    fn default() -> Self {
        Self {
            kind: random_kind(),
            alpha_mean: 1.0,
            alpha_var: default_param_var(),
            beta_mean: 0.0,
            beta_var: default_param_var(),
            min_abs_alpha: default_min_alpha(),
            seed: 0,
            alpha: vec![],
            beta: vec![],
            set: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorOverride {
    pub node: usize,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSection {
    pub kind: String,
    #[serde(default)]
    pub mean: f64,
    #[serde(default = "one")]
    pub s2: f64,
    #[serde(default)]
    pub phi: f64,
    pub seed: Option<u64>,
}

/// A scalar applied to every node or one value per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerNode {
    Scalar(f64),
    List(Vec<f64>),
}

impl Default for PerNode {
    fn default() -> Self {
        PerNode::Scalar(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// Link-up probability.
    #[serde(default = "one")]
    pub p: f64,
    #[serde(default)]
    pub link_var: f64,
    #[serde(default = "uniform_dist")]
    pub link_dist: String,
    #[serde(default)]
    pub meas_var: PerNode,
    /// When set, each node's measurement variance is drawn uniformly from
    /// `(0, meas_var_max)` with the sensor seed, replacing `meas_var`.
    pub meas_var_max: Option<f64>,
    #[serde(default)]
    pub arcs: Vec<ArcNoise>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            p: 1.0,
            link_var: 0.0,
            link_dist: uniform_dist(),
            meas_var: PerNode::default(),
            meas_var_max: None,
            arcs: vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcNoise {
    pub from: usize,
    pub to: usize,
    pub p: Option<f64>,
    pub link_var: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    /// `basic`, `known-variance` or `instrumental`.
    pub kind: String,
    #[serde(default = "default_lag")]
    pub lag: usize,
    #[serde(default)]
    pub allow_zero_lag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    /// `constant` or `power`.
    pub kind: String,
    pub delta: Option<f64>,
    pub m1: Option<f64>,
    #[serde(default)]
    pub m2: f64,
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_rounds")]
    pub rounds: u64,
    #[serde(default = "one_u64")]
    pub seed: u64,
    #[serde(default = "default_cadence")]
    pub cadence: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_null_tol")]
    pub null_tol: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            rounds: default_rounds(),
            seed: 1,
            cadence: default_cadence(),
            runs: default_runs(),
            null_tol: default_null_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinnedSection {
    pub node: usize,
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
}

fn one() -> f64 {
    1.0
}
fn one_u64() -> u64 {
    1
}
fn random_kind() -> String {
    "random".into()
}
fn uniform_dist() -> String {
    "uniform".into()
}
fn default_param_var() -> f64 {
    0.3
}
fn default_min_alpha() -> f64 {
    0.5
}
fn default_lag() -> usize {
    1
}
fn default_rounds() -> u64 {
    10_000
}
fn default_cadence() -> u64 {
    10
}
fn default_runs() -> usize {
    50
}
fn default_null_tol() -> f64 {
    DEFAULT_NULL_TOL
}

/// A parsed configuration plus where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub table: toml::Table,
    pub file: FileConfig,
    pub base_dir: Option<PathBuf>,
    pub source: String,
}

impl LoadedConfig {
    /// Parses a configuration. A run manifest is accepted too; its embedded
    /// `[config]` table is used.
    pub fn from_toml(text: &str, source: impl Into<String>, base_dir: Option<PathBuf>) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        if table.contains_key("config_digest") {
            table = match table.remove("config") {
                Some(toml::Value::Table(t)) => t,
                _ => return Err(Error::Config("manifest has no [config] table".into())),
            };
        }
        Self::from_table(table, source.into(), base_dir)
    }

    fn from_table(table: toml::Table, source: String, base_dir: Option<PathBuf>) -> Result<Self> {
        let file: FileConfig = table.clone().try_into().map_err(|e| Error::Config(format!("{e}")))?;
        Ok(Self { table, file, base_dir, source })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.display().to_string(), path.parent().map(Path::to_path_buf))
            .map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
                other => other,
            })
    }

    pub fn from_preset(name: &str) -> Result<Self> {
        let text = preset(name).ok_or_else(|| {
            Error::Config(format!("unknown preset {name:?}; available: {}", PRESET_NAMES.join(", ")))
        })?;
        Self::from_toml(text, format!("preset:{name}"), None)
    }

    /// Applies `key.path=value`. The value is parsed as a TOML value and
    /// falls back to a plain string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        let value = parse_value(raw.trim());
        let path: Vec<&str> = key.trim().split('.').collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(Error::Config(format!("bad override key {key:?}")));
        }
        let mut table = self.table.clone();
        let mut cur = &mut table;
        for part in &path[..path.len() - 1] {
            let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            cur = entry
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("override {key:?}: {part} is not a table")))?;
        }
        cur.insert(path[path.len() - 1].to_string(), value);
        *self = Self::from_table(table, self.source.clone(), self.base_dir.clone())?;
        Ok(())
    }

    /// Canonical TOML text of the effective configuration.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(&self.file).unwrap_or_default()
    }

    pub fn resolve(&self) -> Result<SimConfig> {
        self.file.resolve(self.base_dir.as_deref())
    }

    pub fn runs(&self) -> usize {
        self.file.sim.runs
    }
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl FileConfig {
    pub fn resolve(&self, base_dir: Option<&Path>) -> Result<SimConfig> {
        let graph = self.build_graph(base_dir)?;
        let n = graph.node_count();
        let (sensors, meas_var) = self.build_sensors(n)?;

        let s = &self.signal;
        let signal = SignalModel::new(SignalKind::parse(&s.kind)?, s.mean, s.s2, s.phi)?;

        let nz = &self.noise;
        let mut up_prob = ArcParam::uniform(nz.p);
        let mut link_var = ArcParam::uniform(nz.link_var);
        for a in &nz.arcs {
            if graph.weight(a.to, a.from) == 0.0 {
                return Err(Error::Config(format!("noise override for missing arc {}->{}", a.from, a.to)));
            }
            if let Some(p) = a.p {
                up_prob.overrides.insert((a.to, a.from), p);
            }
            if let Some(v) = a.link_var {
                link_var.overrides.insert((a.to, a.from), v);
            }
        }
        let noise = NoiseSpec { up_prob, link_var, link_dist: NoiseDist::parse(&nz.link_dist)?, meas_var };

        let algorithm = match self.algorithm.kind.as_str() {
            "basic" => Algorithm::Basic,
            "known-variance" => Algorithm::KnownVariance,
            "instrumental" => Algorithm::Instrumental { lag: self.algorithm.lag },
            other => return Err(Error::Config(format!("unknown algorithm {other:?}"))),
        };

        let sc = &self.schedule;
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| Error::Config(format!("schedule.{key} is required")));
        let schedule = match sc.kind.as_str() {
            "constant" => StepSchedule::constant(need(sc.delta, "delta")?)?,
            "power" => StepSchedule::power(need(sc.m1, "m1")?, sc.m2, need(sc.mu, "mu")?)?,
            other => return Err(Error::Config(format!("unknown schedule {other:?}"))),
        };

        let mut cfg = SimConfig::new(graph, sensors, algorithm, schedule, signal, self.sim.rounds, self.sim.seed)
            .with_noise(noise);
        cfg.allow_zero_lag = self.algorithm.allow_zero_lag;
        cfg.signal_seed = s.seed;
        cfg.cadence = self.sim.cadence;
        cfg.null_tol = self.sim.null_tol;
        cfg.pinned = self.pinned.iter().map(|p| PinnedNode { node: p.node, theta: Theta { a: p.a, b: p.b } }).collect();
        Ok(cfg)
    }

    fn build_graph(&self, base_dir: Option<&Path>) -> Result<WeightedDigraph> {
        let g = &self.graph;
        let n = || g.n.ok_or_else(|| Error::Config("graph.n is required".into()));
        match g.kind.as_str() {
            "random" => {
                let p = g.edge_prob.ok_or_else(|| Error::Config("graph.edge_prob is required".into()))?;
                let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
                WeightedDigraph::random(n()?, p, g.weight, g.root, &mut rng)
            }
            "complete" => WeightedDigraph::complete(n()?, g.weight),
            "ring" => WeightedDigraph::ring(n()?, g.weight),
            "edges" => {
                let arcs = g.arcs.clone().ok_or_else(|| Error::Config("graph.arcs is required".into()))?;
                let implied = arcs.iter().map(|&(a, b, _)| a.max(b) + 1).max().unwrap_or(1);
                WeightedDigraph::from_arcs(g.n.unwrap_or(implied), arcs)
            }
            "file" => {
                let p = g.path.as_ref().ok_or_else(|| Error::Config("graph.path is required".into()))?;
                let full = match base_dir {
                    Some(d) if p.is_relative() => d.join(p),
                    _ => p.clone(),
                };
                WeightedDigraph::read_edge_list(&full)
            }
            other => Err(Error::Config(format!("unknown graph kind {other:?}"))),
        }
    }

    fn build_sensors(&self, n: usize) -> Result<(Vec<SensorTrue>, Vec<f64>)> {
        let s = &self.sensors;
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        let mut sensors = match s.kind.as_str() {
            "random" => {
                let draw = SensorDraw {
                    alpha_mean: s.alpha_mean,
                    alpha_var: s.alpha_var,
                    beta_mean: s.beta_mean,
                    beta_var: s.beta_var,
                    min_abs_alpha: s.min_abs_alpha,
                };
                random_sensors(n, &draw, &mut rng)?
            }
            "list" => {
                if s.alpha.len() != n || s.beta.len() != n {
                    return Err(Error::Config(format!(
                        "sensors.alpha and sensors.beta need {n} entries, got {} and {}",
                        s.alpha.len(),
                        s.beta.len()
                    )));
                }
                s.alpha.iter().zip(&s.beta).map(|(&a, &b)| SensorTrue::new(a, b, 0.0)).collect::<Result<_>>()?
            }
            other => return Err(Error::Config(format!("unknown sensor kind {other:?}"))),
        };
        for o in &s.set {
            let slot = sensors
                .get_mut(o.node)
                .ok_or_else(|| Error::Config(format!("sensor override for node {} out of range", o.node)))?;
            *slot = SensorTrue::new(o.alpha, o.beta, 0.0)?;
        }
        let meas_var = match (self.noise.meas_var_max, &self.noise.meas_var) {
            (Some(max), _) => {
                if !(max >= 0.0) {
                    return Err(Error::Config("noise.meas_var_max must be nonnegative".into()));
                }
                (0..n).map(|_| max * rng.random::<f64>()).collect()
            }
            (None, PerNode::Scalar(v)) => vec![*v; n],
            (None, PerNode::List(v)) if v.len() == n => v.clone(),
            (None, PerNode::List(v)) => {
                return Err(Error::Config(format!("noise.meas_var has {} entries for {n} nodes", v.len())))
            }
        };
        Ok((sensors, meas_var))
    }
}

pub const PRESET_NAMES: &[&str] =
    &["noiseless", "pinned-reference", "lossy-iv-d1", "lossy-no-iv", "pinned-lossy-iv", "two-node"];

const NETWORK: &str = r#"
[graph]
kind = "random"
n = 10
edge_prob = 0.9
weight = 1.0
seed = 1

[sensors]
kind = "random"
alpha_mean = 1.0
alpha_var = 0.3
beta_mean = 0.0
beta_var = 0.3
min_abs_alpha = 0.5
seed = 2

[signal]
kind = "bounded-ar1"
mean = 0.0
s2 = 1.0
phi = 0.8
"#;

const NOISELESS: &str = r#"
[algorithm]
kind = "basic"

[schedule]
kind = "constant"
delta = 0.01

[sim]
rounds = 10000
seed = 3
cadence = 10
runs = 1
"#;

const PINNED: &str = r#"
[[sensors.set]]
node = 0
alpha = 1.0
beta = 0.0

[algorithm]
kind = "basic"

[schedule]
kind = "constant"
delta = 0.01

[sim]
rounds = 10000
seed = 3
cadence = 10
runs = 1

[[pinned]]
node = 0
a = 1.0
b = 0.0
"#;

const LOSSY: &str = r#"
[noise]
p = 0.8
link_var = 0.1
meas_var_max = 0.1

[schedule]
kind = "power"
m1 = 0.01
m2 = 0.0
mu = 0.6

[sim]
rounds = 100000
seed = 3
cadence = 100
runs = 50
"#;

const PINNED_LOSSY: &str = r#"
[[sensors.set]]
node = 0
alpha = 1.0
beta = 0.0

[[sensors.set]]
node = 1
alpha = 1.05
beta = -0.05

[[sensors.set]]
node = 2
alpha = 0.95
beta = 0.05

[noise]
p = 0.8
link_var = 0.001
meas_var_max = 0.001

[algorithm]
kind = "instrumental"
lag = 1

[schedule]
kind = "power"
m1 = 2.0
m2 = 200.0
mu = 1.0

[sim]
rounds = 100000
seed = 3
cadence = 1000
runs = 1

[[pinned]]
node = 0

[[pinned]]
node = 1

[[pinned]]
node = 2
"#;

const TWO_NODE: &str = r#"
[graph]
kind = "edges"
arcs = [[0, 1, 1.0], [1, 0, 1.0]]

[sensors]
kind = "list"
alpha = [1.0, 1.0]
beta = [0.0, 0.0]

[signal]
kind = "iid-uniform"
mean = 0.0
s2 = 1.0

[algorithm]
kind = "basic"

[schedule]
kind = "constant"
delta = 0.01

[sim]
rounds = 1000
seed = 1
runs = 1
"#;

/// TOML text of a bundled preset.
pub fn preset(name: &str) -> Option<&'static str> {
    use std::sync::OnceLock;
    static TEXTS: OnceLock<Vec<String>> = OnceLock::new();
    let texts = TEXTS.get_or_init(|| {
        let lossy_iv = format!("{NETWORK}{LOSSY}\n[algorithm]\nkind = \"instrumental\"\nlag = 1\n");
        let lossy_d0 = format!("{NETWORK}{LOSSY}\n[algorithm]\nkind = \"instrumental\"\nlag = 0\nallow_zero_lag = true\n");
        vec![
            format!("{NETWORK}{NOISELESS}"),
            format!("{NETWORK}{PINNED}"),
            lossy_iv,
            lossy_d0,
            format!("{NETWORK}{PINNED_LOSSY}"),
            TWO_NODE.to_string(),
        ]
    });
    PRESET_NAMES.iter().position(|&p| p == name).map(|k| texts[k].as_str())
}
