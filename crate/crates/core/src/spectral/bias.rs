use nalgebra::DMatrix;

use super::dynamics::MeanDynamics;
use crate::calib::SensorTrue;
use crate::graph::GammaMatrix;

/// Diagonal bias `diag(-σ_i²/α_i Σ_j γ_ij, 0)` per node.
pub fn bias_sigma_eta(sensors: &[SensorTrue], gamma: &GammaMatrix) -> DMatrix<f64> {
    let n = sensors.len();
    let g = gamma.as_matrix();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for (i, s) in sensors.iter().enumerate() {
        m[(2 * i, 2 * i)] = -s.eta_var / s.alpha * -g[(i, i)];
    }
    m
}

/// Expected drift of `(g_i, f_i)` caused by measurement noise in the
/// uncompensated recursion: block `-σ_i² Σ_j γ_ij [[1, 0], [β_i/α_i, 0]]`.
/// The compensated recursion cancels exactly this term.
pub fn bias_sigma_eta_exact(sensors: &[SensorTrue], gamma: &GammaMatrix) -> DMatrix<f64> {
    let n = sensors.len();
    let g = gamma.as_matrix();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for (i, s) in sensors.iter().enumerate() {
        let k = -s.eta_var * -g[(i, i)];
        m[(2 * i, 2 * i)] = k;
        m[(2 * i + 1, 2 * i)] = k * s.beta / s.alpha;
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasDiagnostics {
    /// Some node has nonzero measurement-noise variance.
    pub any_noise: bool,
    /// `‖(B̄ + Σ_η) i₁‖∞`; nonzero means consensus is no longer stationary.
    pub i1_residual: f64,
    /// Largest real part of the spectrum of `B̄ + Σ_η` (exact form).
    pub max_re: f64,
    /// All eigenvalues are stable, so every equivalent gain decays to zero.
    pub predicts_collapse: bool,
}

pub fn bias_diagnostics(dynamics: &MeanDynamics, sensors: &[SensorTrue], gamma: &GammaMatrix) -> BiasDiagnostics {
    let sigma = bias_sigma_eta_exact(sensors, gamma);
    let biased = &dynamics.b_bar + sigma;
    let i1_residual = (&biased * &dynamics.i1).amax();
    let max_re = super::eigenvalues(&biased).iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    let any_noise = sensors.iter().any(|s| s.eta_var > 0.0);
    BiasDiagnostics { any_noise, i1_residual, max_re, predicts_collapse: any_noise && max_re < 0.0 }
}
