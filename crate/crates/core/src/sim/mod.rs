//! Synchronous-round network simulation, convergence metrics, Monte Carlo
//! ensembles and empirical rate fits.

mod config;
mod engine;
mod ensemble;
mod metrics;
pub mod output;

pub use config::{random_sensors, Algorithm, PinnedNode, SensorDraw, SimConfig, DIVERGENCE_GUARD};
pub use engine::{run, NodeRecord, MetricRecord, Reference, Simulation, Trajectory};
pub use ensemble::{fit_rate, monte_carlo, EnsembleStats, RateFit};
pub use metrics::{consensus_spread, distance_to_limit};
