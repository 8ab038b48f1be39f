use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::calib::{CalibState, EquivalentParams, SensorTrue, StepSchedule, Theta};
use crate::error::{Assumption, Error, Result};
use crate::graph::{has_spanning_tree, reachable_from_set, WeightedDigraph};
use crate::signal::{NoiseSpec, SignalModel};
use crate::spectral::{assemble_mean_b, pinned_limit, predicted_limit, MeanDynamics, Moments, DEFAULT_NULL_TOL};

/// Runs abort once any |g| exceeds this.
pub const DIVERGENCE_GUARD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Plain gradient recursion.
    Basic,
    /// Gradient recursion with the known measurement-noise variance compensated.
    KnownVariance,
    /// Delayed reading `y(t-lag)` as regressor.
    Instrumental { lag: usize },
}

impl Algorithm {
    pub fn lag(self) -> usize {
        match self {
            Algorithm::Instrumental { lag } => lag,
            _ => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Basic => "basic",
            Algorithm::KnownVariance => "known-variance",
            Algorithm::Instrumental { .. } => "instrumental",
        }
    }
}

/// A node whose calibration is frozen at `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinnedNode {
    pub node: usize,
    pub theta: Theta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub graph: WeightedDigraph,
    /// Sensor `eta_var` must equal `noise.meas_var`.
    pub sensors: Vec<SensorTrue>,
    pub algorithm: Algorithm,
    /// Permit the instrumental variant with lag 0 (it then coincides with the
    /// basic recursion and is biased under measurement noise).
    pub allow_zero_lag: bool,
    pub schedule: StepSchedule,
    pub signal: SignalModel,
    /// Extra salt for the signal stream; `None` uses the run seed alone.
    pub signal_seed: Option<u64>,
    pub noise: NoiseSpec,
    pub rounds: u64,
    pub seed: u64,
    pub pinned: Vec<PinnedNode>,
    /// Metrics and node records are kept every `cadence` rounds.
    pub cadence: u64,
    pub null_tol: f64,
}

impl SimConfig {
    /// Noiseless configuration with default cadence and tolerance.
    pub fn new(
        graph: WeightedDigraph,
        sensors: Vec<SensorTrue>,
        algorithm: Algorithm,
        schedule: StepSchedule,
        signal: SignalModel,
        rounds: u64,
        seed: u64,
    ) -> Self {
        let noise = NoiseSpec::noiseless(graph.node_count());
        let mut cfg = Self {
            graph,
            sensors,
            algorithm,
            allow_zero_lag: false,
            schedule,
            signal,
            signal_seed: None,
            noise,
            rounds,
            seed,
            pinned: Vec::new(),
            cadence: 10,
            null_tol: DEFAULT_NULL_TOL,
        };
        cfg.sync_meas_var();
        cfg
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    /// Copies `noise.meas_var` into the sensors.
    pub fn sync_meas_var(&mut self) {
        for (s, &v) in self.sensors.iter_mut().zip(&self.noise.meas_var) {
            s.eta_var = v;
        }
    }

    /// Replaces the noise spec and keeps sensor variances in step.
    pub fn with_noise(mut self, noise: NoiseSpec) -> Self {
        self.noise = noise;
        self.sync_meas_var();
        self
    }

    pub fn pinned_set(&self) -> BTreeSet<usize> {
        self.pinned.iter().map(|p| p.node).collect()
    }

    /// Structural checks followed by the modelling assumptions.
    pub fn validate(&self) -> Result<()> {
        let n = self.node_count();
        if self.sensors.len() != n {
            return Err(Error::Config(format!("{} sensors for {n} nodes", self.sensors.len())));
        }
        self.noise.validate(n)?;
        if self.sensors.iter().zip(&self.noise.meas_var).any(|(s, &v)| s.eta_var != v) {
            return Err(Error::Config("sensor noise variances disagree with the noise spec".into()));
        }
        if self.cadence == 0 {
            return Err(Error::Config("metric cadence must be positive".into()));
        }
        let pinned = self.pinned_set();
        if pinned.len() != self.pinned.len() {
            return Err(Error::Config("a node is pinned twice".into()));
        }
        if let Some(p) = self.pinned.iter().find(|p| p.node >= n) {
            return Err(Error::Config(format!("pinned node {} out of range", p.node)));
        }
        if pinned.len() == n {
            return Err(Error::AllNodesFixed);
        }
        if pinned.is_empty() {
            if !has_spanning_tree(&self.graph) {
                return Err(Error::Assumption {
                    assumption: Assumption::A3,
                    detail: "no node reaches every other node".into(),
                });
            }
        } else {
            let reach = reachable_from_set(&self.graph, &pinned)?;
            if let Some(i) = (0..n).find(|i| !pinned.contains(i) && !reach.contains(i)) {
                return Err(Error::Assumption {
                    assumption: Assumption::PinningReachability,
                    detail: format!("node {i} is not reachable from every pinned node"),
                });
            }
        }
        if let Algorithm::Instrumental { lag } = self.algorithm {
            if lag == 0 && !self.allow_zero_lag {
                return Err(Error::Config(
                    "instrumental lag 0 is the biased basic recursion; set allow_zero_lag to run it".into(),
                ));
            }
            if lag > 0 && !self.signal.check_a4prime(lag).holds {
                return Err(Error::Assumption {
                    assumption: Assumption::A4Lagged,
                    detail: format!("m({lag}) does not exceed the squared mean"),
                });
            }
        }
        Ok(())
    }

    /// Initial calibration states.
    pub fn initial_states(&self) -> Vec<CalibState> {
        let lag = self.algorithm.lag();
        let mut states = vec![CalibState::new(lag); self.node_count()];
        for p in &self.pinned {
            states[p.node] = CalibState::pinned(p.theta);
        }
        states
    }

    pub fn initial_rho(&self) -> Vec<EquivalentParams> {
        self.initial_states().iter().zip(&self.sensors).map(|(c, s)| c.equivalent(s)).collect()
    }

    /// Mean dynamics over the expected (lossy) weights at the algorithm's lag.
    pub fn mean_dynamics(&self) -> Result<MeanDynamics> {
        let gamma = self.noise.expected_gamma(&self.graph)?;
        assemble_mean_b(&self.sensors, &gamma, Moments::from_signal(&self.signal, self.algorithm.lag()), self.null_tol)
    }

    /// Predicted limit per node: the common consensus value, or the pinned
    /// limit when nodes are pinned.
    pub fn predicted_limits(&self, dynamics: &MeanDynamics) -> Result<Vec<EquivalentParams>> {
        let rho0 = self.initial_rho();
        if self.pinned.is_empty() {
            return Ok(vec![predicted_limit(dynamics, &rho0); self.node_count()]);
        }
        let fixed = self.pinned_set();
        let rho_fixed: Vec<_> = fixed.iter().map(|&k| rho0[k]).collect();
        let gamma = self.noise.expected_gamma(&self.graph)?;
        Ok(pinned_limit(&gamma, &fixed, &rho_fixed)?.per_node())
    }

    /// SHA-256 over the full configuration.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(format!("{self:?}").as_bytes()))
    }
}

/// Random sensor characteristics: Gaussian gain and offset, redrawing gains
/// with magnitude below `min_abs_alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorDraw {
    pub alpha_mean: f64,
    pub alpha_var: f64,
    pub beta_mean: f64,
    pub beta_var: f64,
    pub min_abs_alpha: f64,
}

impl Default for SensorDraw {
    fn default() -> Self {
        Self { alpha_mean: 1.0, alpha_var: 0.3, beta_mean: 0.0, beta_var: 0.3, min_abs_alpha: 0.5 }
    }
}

pub fn random_sensors<R: Rng + ?Sized>(n: usize, draw: &SensorDraw, rng: &mut R) -> Result<Vec<SensorTrue>> {
    if !(draw.alpha_var >= 0.0 && draw.beta_var >= 0.0) {
        return Err(Error::Config("sensor variances must be nonnegative".into()));
    }
    if draw.alpha_var == 0.0 && draw.alpha_mean.abs() < draw.min_abs_alpha.max(f64::MIN_POSITIVE) {
        return Err(Error::Config("gain distribution never clears the minimum magnitude".into()));
    }
    (0..n)
        .map(|_| {
            let alpha = (0..100_000)
                .map(|_| draw.alpha_mean + draw.alpha_var.sqrt() * rng.sample::<f64, _>(StandardNormal))
                .find(|a| a.abs() >= draw.min_abs_alpha && *a != 0.0)
                .ok_or_else(|| Error::Config("gain distribution rarely clears the minimum magnitude".into()))?;
            let z: f64 = rng.sample(StandardNormal);
            SensorTrue::new(alpha, draw.beta_mean + draw.beta_var.sqrt() * z, 0.0)
        })
        .collect()
}
