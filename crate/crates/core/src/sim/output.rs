//! CSV serialization. Every number is written with 17 significant digits.

use std::io::{self, Write};

use super::engine::Trajectory;
use super::ensemble::EnsembleStats;

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut w: W) -> io::Result<()> {
    writeln!(w, "t,node,a_hat,b_hat,g_hat,f_hat")?;
    for r in &traj.records {
        writeln!(w, "{},{},{},{},{},{}", r.t, r.node, num(r.a), num(r.b), num(r.g), num(r.f))?;
    }
    Ok(())
}

pub fn write_metrics_csv<W: Write>(traj: &Trajectory, mut w: W) -> io::Result<()> {
    writeln!(w, "t,spread,dist_limit,mse_proj")?;
    for m in &traj.metrics {
        writeln!(w, "{},{},{},{}", m.t, num(m.spread), num(m.dist_limit), num(m.mse_proj))?;
    }
    Ok(())
}

pub fn write_ensemble_csv<W: Write>(stats: &EnsembleStats, mut w: W) -> io::Result<()> {
    writeln!(w, "t,mse_mean,mse_ci")?;
    for k in 0..stats.t.len() {
        writeln!(w, "{},{},{}", stats.t[k], num(stats.mse_mean[k]), num(stats.mse_ci[k]))?;
    }
    Ok(())
}
