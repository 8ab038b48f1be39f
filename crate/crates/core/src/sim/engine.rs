use crate::calib::{sensor_read, CalibState, EquivalentParams, InboxMessage};
use crate::error::{Error, Result};
use crate::graph::build_gamma;
use crate::signal::{derive_seed, stream_rng, LinkSampler, MeasurementNoise, SignalGenerator, Stream};
use crate::spectral::{stack_rho, MeanDynamics};

use super::config::{Algorithm, SimConfig, DIVERGENCE_GUARD};
use super::metrics::{consensus_spread, distance_to_limit};

/// One network run, advanced a round at a time.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    cfg: &'a SimConfig,
    states: Vec<CalibState>,
    signal: SignalGenerator,
    links: LinkSampler,
    meas: MeasurementNoise,
    gamma_rows: Vec<Vec<f64>>,
    senders: Vec<Vec<usize>>,
    t: u64,
    y: Vec<f64>,
    z: Vec<f64>,
    inbox: Vec<InboxMessage>,
}

impl<'a> Simulation<'a> {
    /// Fresh run of `cfg` drawing from streams derived from `seed`. The
    /// configuration is assumed validated.
    pub fn new(cfg: &'a SimConfig, seed: u64) -> Self {
        let n = cfg.node_count();
        let gamma = build_gamma(&cfg.graph);
        let gamma_rows = (0..n).map(|i| gamma.as_matrix().row(i).iter().copied().collect()).collect();
        let senders = (0..n).map(|i| cfg.graph.in_neighbors(i).map(|(j, _)| j).collect()).collect();
        let x_seed = cfg.signal_seed.map_or(seed, |s| derive_seed(seed, s));
        Self {
            cfg,
            states: cfg.initial_states(),
            signal: SignalGenerator::from_rng(cfg.signal, stream_rng(x_seed, Stream::Signal)),
            links: LinkSampler::new(seed),
            meas: MeasurementNoise::new(seed),
            gamma_rows,
            senders,
            t: 0,
            y: vec![0.0; n],
            z: vec![0.0; n],
            inbox: Vec::with_capacity(n),
        }
    }

    /// Rounds completed so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn states(&self) -> &[CalibState] {
        &self.states
    }

    pub fn rho(&self) -> Vec<EquivalentParams> {
        self.states.iter().zip(&self.cfg.sensors).map(|(c, s)| c.equivalent(s)).collect()
    }

    /// Round `t`: sample, broadcast outputs from the current state, deliver
    /// over the channels, then update every node with step `δ(t+1)`.
    pub fn round(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let x = self.signal.next_sample();
        for (i, s) in cfg.sensors.iter().enumerate() {
            let eta = self.meas.draw(cfg.noise.meas_var[i]);
            self.y[i] = sensor_read(s, x, eta);
            self.z[i] = self.states[i].output(self.y[i]);
        }
        let delta = cfg.schedule.step_size(self.t + 1);
        for i in 0..self.states.len() {
            self.inbox.clear();
            for &j in &self.senders[i] {
                let (up, xi) = self.links.draw(&cfg.noise, i, j);
                self.inbox.push(InboxMessage { sender: j, z_received: self.z[j] + xi, present: up });
            }
            let state = &mut self.states[i];
            let delayed = state.observe(self.y[i]);
            if state.pinned {
                continue;
            }
            let row = &self.gamma_rows[i];
            match cfg.algorithm {
                Algorithm::Basic => {
                    state.apply(self.y[i], self.y[i], &self.inbox, row, delta);
                }
                Algorithm::KnownVariance => {
                    state.apply_known_variance(self.y[i], &self.inbox, row, delta, cfg.sensors[i].eta_var);
                }
                Algorithm::Instrumental { .. } => {
                    if let Some(yd) = delayed {
                        state.apply(self.y[i], yd, &self.inbox, row, delta);
                    }
                }
            }
            let g = state.theta.a * cfg.sensors[i].alpha;
            if !(g.abs() <= DIVERGENCE_GUARD) {
                return Err(Error::Divergence { round: self.t, node: i, value: g.abs(), limit: DIVERGENCE_GUARD });
            }
        }
        self.t += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeRecord {
    pub t: u64,
    pub node: usize,
    pub a: f64,
    pub b: f64,
    pub g: f64,
    pub f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRecord {
    pub t: u64,
    pub spread: f64,
    pub dist_limit: f64,
    pub mse_proj: f64,
}

/// Spectral reference used for metrics.
#[derive(Debug, Clone)]
pub struct Reference {
    pub dynamics: MeanDynamics,
    pub limits: Vec<EquivalentParams>,
}

impl Reference {
    pub fn for_config(cfg: &SimConfig) -> Result<Self> {
        let dynamics = cfg.mean_dynamics()?;
        let limits = cfg.predicted_limits(&dynamics)?;
        Ok(Self { dynamics, limits })
    }

    pub fn metrics(&self, t: u64, rho: &[EquivalentParams]) -> MetricRecord {
        MetricRecord {
            t,
            spread: consensus_spread(rho),
            dist_limit: distance_to_limit(rho, &self.limits),
            mse_proj: self.dynamics.mse_proj(&stack_rho(rho)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub n: usize,
    pub records: Vec<NodeRecord>,
    pub metrics: Vec<MetricRecord>,
    pub seed: u64,
    pub digest: String,
    pub limits: Vec<EquivalentParams>,
}

impl Trajectory {
    /// Recorded `(g, f)` of every node at round `t`, if recorded.
    pub fn rho_at(&self, t: u64) -> Option<Vec<EquivalentParams>> {
        let start = self.records.iter().position(|r| r.t == t)?;
        Some(self.records[start..start + self.n].iter().map(|r| EquivalentParams::new(r.g, r.f)).collect())
    }

    pub fn final_rho(&self) -> Vec<EquivalentParams> {
        self.records[self.records.len() - self.n..].iter().map(|r| EquivalentParams::new(r.g, r.f)).collect()
    }

    pub fn final_metrics(&self) -> MetricRecord {
        *self.metrics.last().expect("trajectory always records round 0")
    }
}

/// Whether round `t` is recorded in a run of `rounds` rounds.
pub(crate) fn is_checkpoint(t: u64, cadence: u64, rounds: u64) -> bool {
    t.is_multiple_of(cadence) || t == rounds
}

/// Validates `cfg` and executes `cfg.rounds` rounds.
pub fn run(cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let reference = Reference::for_config(cfg)?;
    let mut sim = Simulation::new(cfg, cfg.seed);
    let mut traj = Trajectory {
        n: cfg.node_count(),
        records: Vec::new(),
        metrics: Vec::new(),
        seed: cfg.seed,
        digest: cfg.digest(),
        limits: reference.limits.clone(),
    };
    let record = |sim: &Simulation, traj: &mut Trajectory| {
        let rho = sim.rho();
        for (node, (c, r)) in sim.states().iter().zip(&rho).enumerate() {
            traj.records.push(NodeRecord { t: sim.t(), node, a: c.theta.a, b: c.theta.b, g: r.g, f: r.f });
        }
        traj.metrics.push(reference.metrics(sim.t(), &rho));
    };
    record(&sim, &mut traj);
    while sim.t() < cfg.rounds {
        sim.round()?;
        if is_checkpoint(sim.t(), cfg.cadence, cfg.rounds) {
            record(&sim, &mut traj);
        }
    }
    Ok(traj)
}
