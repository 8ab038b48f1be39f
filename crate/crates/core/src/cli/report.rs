//! Spectral analysis of a configuration, rendered as a plain-text report.

use std::fmt::Write as _;

use nalgebra::Complex;

use crate::calib::{EquivalentParams, StepSchedule};
use crate::error::Result;
use crate::graph::build_gamma;
use crate::sim::{Algorithm, SimConfig};
use crate::spectral::{
    bias_diagnostics, dominance_test, predicted_limit, safe_step_bound, BiasDiagnostics, BlockNorm, MeanDynamics,
};

#[derive(Debug, Clone)]
pub struct Analysis {
    pub dynamics: MeanDynamics,
    /// Common limit of the free-running network.
    pub consensus_limit: EquivalentParams,
    /// Per-node limits with pinning applied, when nodes are pinned.
    pub pinned_limits: Option<Vec<EquivalentParams>>,
    pub bias: BiasDiagnostics,
    /// The algorithm is the uncompensated recursion and some sensor is noisy.
    pub predicts_bias_failure: bool,
    pub safe_step: f64,
    pub text: String,
}

fn fmt_c(l: &Complex<f64>) -> String {
    if l.im == 0.0 {
        format!("{:.10e}", l.re)
    } else {
        format!("{:.10e} {} {:.10e}i", l.re, if l.im < 0.0 { '-' } else { '+' }, l.im.abs())
    }
}

fn fmt_vec(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter().map(|x| format!("{x:.12e}")).collect::<Vec<_>>().join(" ")
}

/// Validates `cfg` and computes every spectral prediction for it.
pub fn analyze(cfg: &SimConfig) -> Result<Analysis> {
    cfg.validate()?;
    let dynamics = cfg.mean_dynamics()?;
    let rho0 = cfg.initial_rho();
    let consensus_limit = predicted_limit(&dynamics, &rho0);
    let pinned_limits = if cfg.pinned.is_empty() { None } else { Some(cfg.predicted_limits(&dynamics)?) };
    let gamma_bar = cfg.noise.expected_gamma(&cfg.graph)?;
    let bias = bias_diagnostics(&dynamics, &cfg.sensors, &gamma_bar);
    let uncompensated = matches!(cfg.algorithm, Algorithm::Basic | Algorithm::Instrumental { lag: 0 });
    let predicts_bias_failure = uncompensated && bias.any_noise;
    let safe_step = safe_step_bound(&dynamics);

    let mut s = String::new();
    let n = cfg.node_count();
    let _ = writeln!(s, "# spectral analysis");
    let _ = writeln!(s, "nodes: {n}");
    let _ = writeln!(s, "arcs: {}", cfg.graph.arc_count());
    let _ = writeln!(s, "algorithm: {} (lag {})", cfg.algorithm.name(), cfg.algorithm.lag());
    let gamma = build_gamma(&cfg.graph);
    let _ = writeln!(s, "gamma row sums: {}", fmt_vec(gamma.row_sums()));
    let _ = writeln!(s, "gamma in-weights: {}", fmt_vec((0..n).map(|i| cfg.graph.in_weight(i))));
    let _ = writeln!(s, "expected gamma in-weights: {}", fmt_vec((0..n).map(|i| -gamma_bar.as_matrix()[(i, i)])));
    if let Algorithm::Instrumental { lag } = cfg.algorithm {
        if lag > 0 {
            let c = cfg.signal.check_a4prime(lag);
            let _ = writeln!(s, "lagged excitation m({lag}) - mean^2: {:.6e}{}", c.margin, if c.weak { " (weak)" } else { "" });
        }
    }

    let _ = writeln!(s, "\n## spectrum of the mean dynamics");
    let mut spectrum = dynamics.spectrum.clone();
    spectrum.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    for l in &spectrum {
        let class = if l.norm() < dynamics.null_tol {
            "zero"
        } else if l.re < 0.0 {
            "stable"
        } else {
            "unstable"
        };
        let _ = writeln!(s, "{class:>8}  {}", fmt_c(l));
    }
    let _ = writeln!(s, "zero eigenvalues: 2 (|lambda| < {:e})", dynamics.null_tol);
    let _ = writeln!(s, "spectral gap: {:.6e}", dynamics.spectral_gap);
    let _ = writeln!(s, "largest nonzero real part: {:.6e}", dynamics.max_re_nonnull);
    let _ = writeln!(s, "decoupling residual: {:.3e}", dynamics.decoupling_residual);

    let _ = writeln!(s, "\n## left null vectors");
    let _ = writeln!(s, "pi1: {}", fmt_vec(dynamics.pi1.iter().copied()));
    let _ = writeln!(s, "pi2: {}", fmt_vec(dynamics.pi2.iter().copied()));

    let _ = writeln!(s, "\n## predicted limits");
    let _ = writeln!(s, "consensus (g, f): {:.12e} {:.12e}", consensus_limit.g, consensus_limit.f);
    if let Some(p) = &pinned_limits {
        let pinned = cfg.pinned_set();
        for (i, l) in p.iter().enumerate() {
            let tag = if pinned.contains(&i) { " (pinned)" } else { "" };
            let _ = writeln!(s, "node {i}: {:.12e} {:.12e}{tag}", l.g, l.f);
        }
    }

    let _ = writeln!(s, "\n## block dominance");
    for norm in [BlockNorm::Spectral, BlockNorm::DWeighted] {
        match dominance_test(&dynamics.b_bar, 2, norm) {
            Ok(r) => {
                let hurwitz = r.diag_hurwitz.iter().filter(|&&h| h).count();
                let _ = writeln!(
                    s,
                    "{}: M-matrix {}, Hurwitz diagonal blocks {hurwitz}/{}",
                    norm.name(),
                    r.is_m_matrix,
                    r.diag_hurwitz.len()
                );
            }
            Err(e) => {
                let _ = writeln!(s, "{}: no verdict ({e})", norm.name());
            }
        }
    }

    let _ = writeln!(s, "\n## measurement-noise bias");
    let _ = writeln!(s, "noisy sensors: {}", cfg.sensors.iter().filter(|x| x.eta_var > 0.0).count());
    let _ = writeln!(s, "consensus residual with bias: {:.6e}", bias.i1_residual);
    let _ = writeln!(s, "largest real part with bias: {:.6e}", bias.max_re);
    let verdict = if !bias.any_noise {
        "no measurement noise; no bias"
    } else if predicts_bias_failure && bias.predicts_collapse {
        "uncompensated recursion: consensus fails and every gain decays to zero"
    } else if predicts_bias_failure {
        "uncompensated recursion: consensus fails"
    } else if cfg.algorithm == Algorithm::KnownVariance {
        "bias cancelled by the known-variance correction"
    } else {
        "bias removed by the delayed regressor"
    };
    let _ = writeln!(s, "verdict: {verdict}");

    let _ = writeln!(s, "\n## step size");
    let _ = writeln!(s, "safe step bound (heuristic): {safe_step:.6e}");
    let first = match cfg.schedule {
        StepSchedule::Constant { delta } => delta,
        p => p.step_size(1),
    };
    let _ = writeln!(s, "configured first step: {first:.6e}{}", if first > safe_step { " (above bound)" } else { "" });

    Ok(Analysis { dynamics, consensus_limit, pinned_limits, bias, predicts_bias_failure, safe_step, text: s })
}
