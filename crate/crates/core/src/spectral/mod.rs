//! Mean dynamics of the equivalent parameters and the spectral predictions
//! built on them: consensus limits, pinned limits, step bounds, noise bias.

mod bias;
mod dominance;
mod dynamics;
mod phi;
mod pinned;

pub use bias::{bias_sigma_eta, bias_sigma_eta_exact, bias_diagnostics, BiasDiagnostics};
pub use dominance::{dominance_test, is_m_matrix, BlockNorm, DominanceReport};
pub use dynamics::{
    assemble_mean_b, decoupling_residual, kron_i2, predicted_limit, realized_b, safe_step_bound,
    verify_left_annihilation, MeanDynamics, Moments, DEFAULT_NULL_TOL,
};
pub use phi::{block_diag_phi, mean_phi, phi_hurwitz, realized_phi, HurwitzCheck};
pub use pinned::{pinned_limit, pinned_mean_drift, PinnedLimit};

use nalgebra::DMatrix;

/// Stacks per-node pairs into the 2n vector `[g_1, f_1, g_2, f_2, ...]`.
pub fn stack_rho(rho: &[crate::calib::EquivalentParams]) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_iterator(rho.len() * 2, rho.iter().flat_map(|r| [r.g, r.f]))
}

/// Eigenvalues of a square matrix via the real Schur form.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<nalgebra::Complex<f64>> {
    m.clone().complex_eigenvalues().iter().copied().collect()
}
