use nalgebra::{Complex, DMatrix, DVector};

use super::phi::{block_diag_phi, mean_phi, phi_hurwitz, realized_phi};
use crate::calib::{EquivalentParams, SensorTrue};
use crate::error::{Assumption, Error, Result};
use crate::graph::{has_spanning_tree, GammaMatrix, WeightedDigraph};
use crate::signal::SignalModel;

/// Absolute tolerance on |λ| used to classify eigenvalues as zero.
pub const DEFAULT_NULL_TOL: f64 = 1e-8;

/// Signal moments entering Φ̄: the mean and `E{x(t) x(t-lag)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub second: f64,
    pub lag: usize,
}

impl Moments {
    pub fn from_signal(signal: &SignalModel, lag: usize) -> Self {
        Self { mean: signal.mean(), second: signal.moment(lag), lag }
    }
}

/// `Γ ⊗ I₂`.
pub fn kron_i2(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.kronecker(&DMatrix::<f64>::identity(2, 2))
}

fn indicators(n: usize) -> (DVector<f64>, DVector<f64>) {
    let i1 = DVector::from_fn(2 * n, |k, _| if k % 2 == 0 { 1.0 } else { 0.0 });
    let i2 = DVector::from_fn(2 * n, |k, _| if k % 2 == 1 { 1.0 } else { 0.0 });
    (i1, i2)
}

/// Mean dynamics `B̄ = Φ̄ (Γ ⊗ I₂)` and its decomposition.
#[derive(Debug, Clone)]
pub struct MeanDynamics {
    pub b_bar: DMatrix<f64>,
    pub spectrum: Vec<Complex<f64>>,
    pub i1: DVector<f64>,
    pub i2: DVector<f64>,
    /// Left null vectors normalized so that `[π₁; π₂][i₁ i₂] = I₂`.
    pub pi1: DVector<f64>,
    pub pi2: DVector<f64>,
    /// `[i₁ i₂ | basis of range(B̄)]`.
    pub t: DMatrix<f64>,
    pub t_inv: DMatrix<f64>,
    /// Lower-right `(2n-2) x (2n-2)` block of `T⁻¹ B̄ T`.
    pub b_star: DMatrix<f64>,
    pub null_tol: f64,
    /// Smallest |λ| among the eigenvalues not classified as zero.
    pub spectral_gap: f64,
    /// Largest real part among the eigenvalues not classified as zero.
    pub max_re_nonnull: f64,
    /// `‖T⁻¹B̄T - diag(0, B*)‖ / ‖B̄‖`.
    pub decoupling_residual: f64,
}

impl MeanDynamics {
    pub fn node_count(&self) -> usize {
        self.b_bar.nrows() / 2
    }

    /// Rows `3..2n` of `T⁻¹`; its kernel is the consensus subspace.
    pub fn s_matrix(&self) -> DMatrix<f64> {
        let m = self.t_inv.nrows();
        self.t_inv.rows(2, m - 2).into_owned()
    }

    /// `‖S ρ‖²`, the squared disagreement in decoupled coordinates.
    pub fn mse_proj(&self, rho: &DVector<f64>) -> f64 {
        let m = self.t_inv.nrows();
        (self.t_inv.rows(2, m - 2) * rho).norm_squared()
    }

    /// Eigenvalues of `B*` (the non-null part of the spectrum).
    pub fn b_star_spectrum(&self) -> Vec<Complex<f64>> {
        super::eigenvalues(&self.b_star)
    }

    pub fn is_stable_off_null(&self) -> bool {
        self.max_re_nonnull < 0.0
    }
}

/// Assembles `B̄` and extracts null vectors, the decoupling transform and `B*`.
/// Fails with an assumption error when Γ has no spanning tree or some `-Φ̄_i`
/// is not Hurwitz, and with [`Error::NullSpace`] when the number of
/// eigenvalues below `null_tol` is not exactly two.
pub fn assemble_mean_b(
    sensors: &[SensorTrue],
    gamma: &GammaMatrix,
    moments: Moments,
    null_tol: f64,
) -> Result<MeanDynamics> {
    let n = gamma.size();
    if sensors.len() != n {
        return Err(Error::Config(format!("{} sensors for a {n}-node graph", sensors.len())));
    }
    if !has_spanning_tree(&WeightedDigraph::from_gamma(gamma)) {
        return Err(Error::Assumption {
            assumption: Assumption::A3,
            detail: "no node reaches every other node".into(),
        });
    }
    for (i, s) in sensors.iter().enumerate() {
        let check = phi_hurwitz(s, moments.mean, moments.second);
        if !check.holds() {
            let assumption = if moments.lag == 0 { Assumption::A4 } else { Assumption::A4Lagged };
            return Err(Error::Assumption {
                assumption,
                detail: format!(
                    "mean regression matrix of node {i} is not stable (det {:e}, trace {:e}) at lag {}",
                    check.determinant, check.trace, moments.lag
                ),
            });
        }
    }

    let phis: Vec<_> = sensors.iter().map(|s| mean_phi(s, moments.mean, moments.second)).collect();
    let b_bar = block_diag_phi(&phis) * kron_i2(gamma.as_matrix());
    let spectrum = super::eigenvalues(&b_bar);
    let null_count = spectrum.iter().filter(|l| l.norm() < null_tol).count();
    if null_count != 2 {
        return Err(Error::NullSpace { expected: 2, found: null_count, tol: null_tol });
    }
    let rest = spectrum.iter().filter(|l| l.norm() >= null_tol);
    let spectral_gap = rest.clone().map(|l| l.norm()).fold(f64::INFINITY, f64::min);
    let max_re_nonnull = rest.map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);

    let (i1, i2) = indicators(n);
    let dim = 2 * n;
    let svd = b_bar.clone().svd(true, false);
    let u = svd.u.as_ref().ok_or_else(|| Error::Singular("SVD did not return U".into()))?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    // left null basis from the two smallest singular values
    let left = DMatrix::from_fn(2, dim, |r, c| u[(c, order[dim - 2 + r])]);
    let mut i12 = DMatrix::zeros(dim, 2);
    i12.set_column(0, &i1);
    i12.set_column(1, &i2);
    let norm = (&left * &i12)
        .try_inverse()
        .ok_or_else(|| Error::Singular("left null vectors are orthogonal to the consensus subspace".into()))?;
    let pi = norm * left;
    let pi1 = pi.row(0).transpose();
    let pi2 = pi.row(1).transpose();

    let mut t = DMatrix::zeros(dim, dim);
    t.set_column(0, &i1);
    t.set_column(1, &i2);
    for k in 0..dim - 2 {
        t.set_column(k + 2, &u.column(order[k]));
    }
    let t_inv = t.clone().lu().try_inverse().ok_or_else(|| Error::Singular("decoupling transform".into()))?;
    let m = &t_inv * &b_bar * &t;
    let b_star = m.view((2, 2), (dim - 2, dim - 2)).into_owned();
    let mut off = m.clone();
    off.view_mut((2, 2), (dim - 2, dim - 2)).fill(0.0);
    let scale = b_bar.norm().max(f64::MIN_POSITIVE);
    let decoupling_residual = off.norm() / scale;

    Ok(MeanDynamics {
        b_bar,
        spectrum,
        i1,
        i2,
        pi1,
        pi2,
        t,
        t_inv,
        b_star,
        null_tol,
        spectral_gap,
        max_re_nonnull,
        decoupling_residual,
    })
}

/// Common limit `(π₁ρ(0), π₂ρ(0))`.
pub fn predicted_limit(dynamics: &MeanDynamics, rho0: &[EquivalentParams]) -> EquivalentParams {
    let rho = super::stack_rho(rho0);
    EquivalentParams { g: dynamics.pi1.dot(&rho), f: dynamics.pi2.dot(&rho) }
}

/// One realization `B(t) = Φ(t) (Γ ⊗ I₂)` for signal value `x` and per-node
/// regressor readings `y_reg` (current readings, or delayed ones for the
/// instrumental variant).
pub fn realized_b(sensors: &[SensorTrue], gamma: &GammaMatrix, x: f64, y_reg: &[f64]) -> DMatrix<f64> {
    let phis: Vec<_> = sensors.iter().zip(y_reg).map(|(s, &y)| realized_phi(s, x, y)).collect();
    block_diag_phi(&phis) * kron_i2(gamma.as_matrix())
}

/// Largest `max(‖π₁B‖∞, ‖π₂B‖∞) / ‖B‖` over the given realizations.
pub fn verify_left_annihilation(dynamics: &MeanDynamics, samples: &[DMatrix<f64>]) -> f64 {
    samples
        .iter()
        .map(|b| {
            let r1 = (dynamics.pi1.transpose() * b).amax();
            let r2 = (dynamics.pi2.transpose() * b).amax();
            r1.max(r2) / b.norm().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

/// Relative size of the blocks of `T⁻¹ B T` that must vanish: the top-left
/// 2x2 block and both off-diagonal blocks.
pub fn decoupling_residual(dynamics: &MeanDynamics, b: &DMatrix<f64>) -> f64 {
    let dim = b.nrows();
    let mut m = &dynamics.t_inv * b * &dynamics.t;
    m.view_mut((2, 2), (dim - 2, dim - 2)).fill(0.0);
    m.norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Heuristic step bound: 0.9 times the largest δ for which every eigenvalue
/// of `I + δB*` lies inside the unit circle, i.e. `min_k 2|Re λ_k| / |λ_k|²`.
/// Returns 0 when `B*` has an eigenvalue with nonnegative real part.
pub fn safe_step_bound(dynamics: &MeanDynamics) -> f64 {
    let eig = dynamics.b_star_spectrum();
    if eig.is_empty() {
        return f64::INFINITY;
    }
    if eig.iter().any(|l| l.re >= 0.0) {
        return 0.0;
    }
    0.9 * eig.iter().map(|l| -2.0 * l.re / l.norm_sqr()).fold(f64::INFINITY, f64::min)
}
