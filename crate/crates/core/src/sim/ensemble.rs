use rayon::prelude::*;

use crate::calib::{EquivalentParams, StepSchedule};
use crate::error::{Error, Result};
use crate::signal::derive_seed;
use crate::spectral::stack_rho;

use super::config::SimConfig;
use super::engine::{is_checkpoint, Reference, Simulation};

/// Per-checkpoint statistics across independent runs.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub runs: usize,
    pub t: Vec<u64>,
    /// Mean of `‖S ρ(t)‖²` across runs.
    pub mse_mean: Vec<f64>,
    /// 95% normal half-width of `mse_mean`.
    pub mse_ci: Vec<f64>,
    /// Median equivalent gain over all runs and nodes.
    pub median_g: Vec<f64>,
    /// Mean of the stacked `[g_1, f_1, ...]` vector across runs.
    pub rho_mean: Vec<Vec<f64>>,
    /// Standard error of `rho_mean`.
    pub rho_se: Vec<Vec<f64>>,
    /// Final state of every run, in run order.
    pub final_rho: Vec<Vec<EquivalentParams>>,
}

impl EnsembleStats {
    pub fn index_of(&self, t: u64) -> Option<usize> {
        self.t.binary_search(&t).ok()
    }
}

struct RunOutput {
    mse: Vec<f64>,
    rho: Vec<Vec<f64>>,
    last: Vec<EquivalentParams>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) }
}

/// Runs `runs` independent copies of `cfg` in parallel. Run `r` uses seed
/// `derive_seed(cfg.seed, r)`, so adding runs never changes earlier ones.
/// The reduction happens in run order and does not depend on scheduling.
pub fn monte_carlo(cfg: &SimConfig, runs: usize) -> Result<EnsembleStats> {
    if runs == 0 {
        return Err(Error::Config("an ensemble needs at least one run".into()));
    }
    cfg.validate()?;
    let reference = Reference::for_config(cfg)?;
    let ts: Vec<u64> = (0..=cfg.rounds).filter(|&t| is_checkpoint(t, cfg.cadence, cfg.rounds)).collect();

    let outputs: Vec<Result<RunOutput>> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut sim = Simulation::new(cfg, derive_seed(cfg.seed, r as u64));
            let mut out = RunOutput { mse: Vec::with_capacity(ts.len()), rho: Vec::with_capacity(ts.len()), last: vec![] };
            let push = |sim: &Simulation, out: &mut RunOutput| {
                let rho = stack_rho(&sim.rho());
                out.mse.push(reference.dynamics.mse_proj(&rho));
                out.rho.push(rho.iter().copied().collect());
            };
            push(&sim, &mut out);
            while sim.t() < cfg.rounds {
                sim.round()?;
                if is_checkpoint(sim.t(), cfg.cadence, cfg.rounds) {
                    push(&sim, &mut out);
                }
            }
            out.last = sim.rho();
            Ok(out)
        })
        .collect();
    let outputs: Vec<RunOutput> = outputs.into_iter().collect::<Result<_>>()?;

    let rf = runs as f64;
    let dim = 2 * cfg.node_count();
    let mut stats = EnsembleStats {
        runs,
        t: ts.clone(),
        mse_mean: Vec::with_capacity(ts.len()),
        mse_ci: Vec::with_capacity(ts.len()),
        median_g: Vec::with_capacity(ts.len()),
        rho_mean: Vec::with_capacity(ts.len()),
        rho_se: Vec::with_capacity(ts.len()),
        final_rho: outputs.iter().map(|o| o.last.clone()).collect(),
    };
    for k in 0..ts.len() {
        let mean = outputs.iter().map(|o| o.mse[k]).sum::<f64>() / rf;
        let sd = if runs > 1 {
            (outputs.iter().map(|o| (o.mse[k] - mean).powi(2)).sum::<f64>() / (rf - 1.0)).sqrt()
        } else {
            0.0
        };
        stats.mse_mean.push(mean);
        stats.mse_ci.push(1.96 * sd / rf.sqrt());
        let mut gains: Vec<f64> = outputs.iter().flat_map(|o| o.rho[k].iter().step_by(2).copied()).collect();
        stats.median_g.push(median(&mut gains));
        let mut m = vec![0.0; dim];
        for o in &outputs {
            for (acc, v) in m.iter_mut().zip(&o.rho[k]) {
                *acc += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= rf);
        let se = (0..dim)
            .map(|c| {
                if runs < 2 {
                    return 0.0;
                }
                let ss: f64 = outputs.iter().map(|o| (o.rho[k][c] - m[c]).powi(2)).sum();
                (ss / (rf - 1.0) / rf).sqrt()
            })
            .collect();
        stats.rho_mean.push(m);
        stats.rho_se.push(se);
    }
    Ok(stats)
}

/// Empirical convergence-rate summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    /// Least-squares slope of `ln MSE` against `ln δ(t)` over the window.
    pub sigma_hat: f64,
    /// Exponent used for the monotonicity check.
    pub sigma: f64,
    /// Geometric centre of each bin.
    pub bin_t: Vec<f64>,
    /// Mean of `MSE(t) / δ(t)^σ` within each bin.
    pub bin_ratio: Vec<f64>,
    /// `bin_ratio` never increases from one bin to the next.
    pub nonincreasing: bool,
}

/// Fits the decay exponent of `MSE(t)` in units of `δ(t)` over rounds
/// `window.0..=window.1`, and checks whether `MSE/δ^σ` is non-increasing
/// after averaging within `bins` log-spaced bins.
pub fn fit_rate(
    stats: &EnsembleStats,
    schedule: &StepSchedule,
    window: (u64, u64),
    sigma: f64,
    bins: usize,
) -> Result<RateFit> {
    if !schedule.is_decreasing() {
        return Err(Error::Schedule("rate fits need a decreasing step-size schedule".into()));
    }
    let (t0, t1) = window;
    if t0 == 0 || t1 <= t0 || bins == 0 {
        return Err(Error::Config(format!("bad rate-fit window {t0}..{t1} with {bins} bins")));
    }
    let pts: Vec<(f64, f64, f64)> = stats
        .t
        .iter()
        .zip(&stats.mse_mean)
        .filter(|(&t, &m)| t >= t0 && t <= t1 && m > 0.0)
        .map(|(&t, &m)| (t as f64, schedule.step_size(t), m))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Config("fewer than two usable points in the rate-fit window".into()));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.2.ln()).collect();
    let np = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / np, ys.iter().sum::<f64>() / np);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sigma_hat = sxy / sxx;

    let (l0, l1) = ((t0 as f64).ln(), (t1 as f64).ln());
    let width = (l1 - l0) / bins as f64;
    let mut bin_t = Vec::new();
    let mut bin_ratio = Vec::new();
    for b in 0..bins {
        let (lo, hi) = (l0 + b as f64 * width, l0 + (b + 1) as f64 * width);
        let inside: Vec<f64> = pts
            .iter()
            .filter(|p| {
                let l = p.0.ln();
                l >= lo && (l < hi || (b + 1 == bins && l <= hi))
            })
            .map(|p| p.2 / p.1.powf(sigma))
            .collect();
        if !inside.is_empty() {
            bin_t.push((0.5 * (lo + hi)).exp());
            bin_ratio.push(inside.iter().sum::<f64>() / inside.len() as f64);
        }
    }
    let nonincreasing = bin_ratio.windows(2).all(|w| w[1] <= w[0]);
    Ok(RateFit { sigma_hat, sigma, bin_t, bin_ratio, nonincreasing })
}
