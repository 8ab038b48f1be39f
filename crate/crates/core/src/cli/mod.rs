//! Command implementations behind the `macrocal` binary.

pub mod config;
pub mod report;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sim::output::{write_ensemble_csv, write_metrics_csv, write_trajectory_csv};
use crate::sim::{fit_rate, monte_carlo, run, SimConfig};
pub use config::{FileConfig, LoadedConfig, PRESET_NAMES};
pub use report::{analyze, Analysis};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ASSUMPTION: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Assumption { .. } | Error::NullSpace { .. } | Error::Singular(_) => EXIT_ASSUMPTION,
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_CONFIG,
    }
}

/// Options shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub preset: Option<String>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub rounds: Option<u64>,
    pub runs: Option<usize>,
    pub set: Vec<String>,
}

impl Options {
    /// Loads the configuration and applies `--set`, then the dedicated flags.
    pub fn load(&self) -> Result<LoadedConfig> {
        let mut c = match (&self.config, &self.preset) {
            (Some(p), None) => LoadedConfig::from_path(p)?,
            (None, Some(name)) => LoadedConfig::from_preset(name)?,
            (Some(_), Some(_)) => return Err(Error::Config("give either --config or --preset, not both".into())),
            (None, None) => return Err(Error::Config("one of --config or --preset is required".into())),
        };
        for s in &self.set {
            c.set(s)?;
        }
        if let Some(v) = self.seed {
            c.set(&format!("sim.seed={v}"))?;
        }
        if let Some(v) = self.rounds {
            c.set(&format!("sim.rounds={v}"))?;
        }
        if let Some(v) = self.runs {
            c.set(&format!("sim.runs={v}"))?;
        }
        Ok(c)
    }
}

/// Record of what produced an output directory. The embedded configuration
/// is self-contained, so the manifest alone reproduces every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_digest: String,
    pub source: String,
    pub seed: u64,
    pub runs: Option<usize>,
    pub outputs: Vec<String>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub config: FileConfig,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Configuration with file-based graphs inlined as explicit arcs.
fn self_contained(loaded: &LoadedConfig, cfg: &SimConfig) -> FileConfig {
    let mut file = loaded.file.clone();
    if file.graph.kind == "file" {
        file.graph.kind = "edges".into();
        file.graph.path = None;
        file.graph.n = Some(cfg.node_count());
        file.graph.arcs = Some(cfg.graph.arcs().collect());
    }
    file
}

fn digest(file: &FileConfig) -> String {
    let text = toml::to_string(file).unwrap_or_default();
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    let path = dir.join(name);
    fs::File::create(&path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

fn finish(dir: &Path, mut manifest: RunManifest) -> Result<RunManifest> {
    manifest.finished_unix = now();
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(format!("manifest: {e}")))?;
    write_text(dir, "manifest.toml", &text)?;
    Ok(manifest)
}

fn manifest(command: &str, loaded: &LoadedConfig, cfg: &SimConfig, started: u64) -> RunManifest {
    let file = self_contained(loaded, cfg);
    RunManifest {
        command: command.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config_digest: digest(&file),
        source: loaded.source.clone(),
        seed: cfg.seed,
        runs: None,
        outputs: vec![],
        started_unix: started,
        finished_unix: 0,
        config: file,
    }
}

fn make_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

const RUN_PLOT: &str = r#"# gnuplot script: equivalent parameters and convergence metrics
set datafile separator ","
set key off
set terminal pngcairo size 900,600
set output "gains.png"
set xlabel "round"
set ylabel "g_hat"
plot "trajectory.csv" every ::1 using 1:5
set output "offsets.png"
set ylabel "f_hat"
plot "trajectory.csv" every ::1 using 1:6
set output "metrics.png"
set logscale y
set key on
set ylabel "spread / distance"
plot "metrics.csv" every ::1 using 1:2 with lines title "spread", \
     "metrics.csv" every ::1 using 1:3 with lines title "distance to limit"
"#;

const ENSEMBLE_PLOT: &str = r#"# gnuplot script: ensemble mean-square disagreement
set datafile separator ","
set terminal pngcairo size 900,600
set output "ensemble.png"
set logscale xy
set xlabel "round"
set ylabel "mean-square disagreement"
plot "ensemble.csv" every ::2 using 1:2:3 with yerrorlines title "mse"
"#;

/// Writes `trajectory.csv`, `metrics.csv`, `plot.gp` and the manifest.
pub fn cmd_run(opts: &Options) -> Result<RunManifest> {
    let started = now();
    let loaded = opts.load()?;
    let cfg = loaded.resolve()?;
    cfg.validate()?;
    let traj = run(&cfg)?;
    make_dir(&opts.out)?;
    let io = |p: &str| {
        let path = opts.out.join(p);
        move |e| Error::io(path, e)
    };
    write_trajectory_csv(&traj, create(&opts.out, "trajectory.csv")?).map_err(io("trajectory.csv"))?;
    write_metrics_csv(&traj, create(&opts.out, "metrics.csv")?).map_err(io("metrics.csv"))?;
    write_text(&opts.out, "plot.gp", RUN_PLOT)?;
    let mut m = manifest("run", &loaded, &cfg, started);
    m.outputs = vec!["trajectory.csv".into(), "metrics.csv".into(), "plot.gp".into()];
    finish(&opts.out, m)
}

/// Writes `analysis.txt` and the manifest.
pub fn cmd_analyze(opts: &Options) -> Result<(RunManifest, Analysis)> {
    let started = now();
    let loaded = opts.load()?;
    let cfg = loaded.resolve()?;
    let analysis = analyze(&cfg)?;
    make_dir(&opts.out)?;
    write_text(&opts.out, "analysis.txt", &analysis.text)?;
    let mut m = manifest("analyze", &loaded, &cfg, started);
    m.outputs = vec!["analysis.txt".into()];
    Ok((finish(&opts.out, m)?, analysis))
}

/// Writes `ensemble.csv`, `rate.txt`, `plot.gp` and the manifest.
pub fn cmd_ensemble(opts: &Options) -> Result<RunManifest> {
    let started = now();
    let loaded = opts.load()?;
    let cfg = loaded.resolve()?;
    cfg.validate()?;
    let runs = loaded.runs();
    let stats = monte_carlo(&cfg, runs)?;
    make_dir(&opts.out)?;
    write_ensemble_csv(&stats, create(&opts.out, "ensemble.csv")?).map_err(|e| Error::io(opts.out.join("ensemble.csv"), e))?;
    let mut rate = format!("runs: {runs}\nrounds: {}\n", cfg.rounds);
    let last = stats.t.len() - 1;
    rate += &format!("final mse: {:.6e} +/- {:.3e}\n", stats.mse_mean[last], stats.mse_ci[last]);
    rate += &format!("final median gain: {:.6e}\n", stats.median_g[last]);
    if cfg.schedule.is_decreasing() && cfg.rounds >= 10 {
        let window = ((cfg.rounds / 10).max(1), cfg.rounds);
        match fit_rate(&stats, &cfg.schedule, window, 0.2, 5) {
            Ok(fit) => {
                rate += &format!("window: {}..{}\n", window.0, window.1);
                rate += &format!("sigma_hat: {:.6}\n", fit.sigma_hat);
                rate += &format!("ratio mse/delta^{} non-increasing: {}\n", fit.sigma, fit.nonincreasing);
            }
            Err(e) => rate += &format!("rate fit unavailable: {e}\n"),
        }
    } else {
        rate += "rate fit skipped: constant step size\n";
    }
    write_text(&opts.out, "rate.txt", &rate)?;
    write_text(&opts.out, "plot.gp", ENSEMBLE_PLOT)?;
    let mut m = manifest("ensemble", &loaded, &cfg, started);
    m.runs = Some(runs);
    m.outputs = vec!["ensemble.csv".into(), "rate.txt".into(), "plot.gp".into()];
    finish(&opts.out, m)
}
