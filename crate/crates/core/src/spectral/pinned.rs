use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use super::dominance::is_m_matrix;
use super::dynamics::Moments;
use super::phi::mean_phi;
use crate::calib::{EquivalentParams, SensorTrue};
use crate::error::{Assumption, Error, Result};
use crate::graph::{reachable_from_set, restrict_gamma, GammaMatrix, WeightedDigraph};

/// Limits of the free nodes when the `fixed` nodes never update.
#[derive(Debug, Clone, PartialEq)]
pub struct PinnedLimit {
    pub free: Vec<usize>,
    pub fixed: Vec<usize>,
    /// One pair per free node, in `free` order.
    pub limits: Vec<EquivalentParams>,
    /// The fixed nodes' own pairs, in `fixed` order.
    pub rho_fixed: Vec<EquivalentParams>,
}

impl PinnedLimit {
    /// Limit for every node, fixed nodes holding their own values.
    pub fn per_node(&self) -> Vec<EquivalentParams> {
        let n = self.free.len() + self.fixed.len();
        let mut out = vec![EquivalentParams::default(); n];
        for (&i, &r) in self.free.iter().zip(&self.limits) {
            out[i] = r;
        }
        for (&k, &r) in self.fixed.iter().zip(&self.rho_fixed) {
            out[k] = r;
        }
        out
    }
}

/// `ρ^f = -(Γ^f ⊗ I₂)⁻¹ (Γ̃^f ⊗ I₂) ρ̃^f`. `rho_fixed` lists the pinned
/// nodes' equivalent parameters in ascending node order.
pub fn pinned_limit(
    gamma: &GammaMatrix,
    fixed: &BTreeSet<usize>,
    rho_fixed: &[EquivalentParams],
) -> Result<PinnedLimit> {
    if fixed.is_empty() {
        return Err(Error::EmptyNodeSet);
    }
    if rho_fixed.len() != fixed.len() {
        return Err(Error::Config(format!("{} pinned values for {} pinned nodes", rho_fixed.len(), fixed.len())));
    }
    let r = restrict_gamma(gamma, fixed)?;
    let reach = reachable_from_set(&WeightedDigraph::from_gamma(gamma), fixed)?;
    if let Some(&i) = r.free.iter().find(|i| !reach.contains(i)) {
        return Err(Error::Assumption {
            assumption: Assumption::PinningReachability,
            detail: format!("node {i} is not reachable from every pinned node"),
        });
    }
    if !is_m_matrix(&(-&r.gamma_free)) {
        return Err(Error::Singular("negated free-node weight block is not an M-matrix".into()));
    }
    // Γ^f ⊗ I₂ acts on g and f separately
    let rhs = -(&r.gamma_cross * DMatrix::from_fn(fixed.len(), 2, |k, c| if c == 0 { rho_fixed[k].g } else { rho_fixed[k].f }));
    let sol = r
        .gamma_free
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("free-node weight block".into()))?;
    let limits = (0..r.free.len()).map(|i| EquivalentParams::new(sol[(i, 0)], sol[(i, 1)])).collect();
    Ok(PinnedLimit { free: r.free, fixed: r.fixed, limits, rho_fixed: rho_fixed.to_vec() })
}

/// Drift `Φ̄_i Σ_j γ̄_ij (ρ_j - ρ_i)` of each free node under the pinned mean
/// recursion, stacked as `[g, f]` pairs in free-node order. Zero at the
/// pinned limit.
pub fn pinned_mean_drift(
    sensors: &[SensorTrue],
    gamma: &GammaMatrix,
    moments: Moments,
    fixed: &BTreeSet<usize>,
    rho: &[EquivalentParams],
) -> DVector<f64> {
    let m = gamma.as_matrix();
    let free: Vec<usize> = (0..sensors.len()).filter(|i| !fixed.contains(i)).collect();
    let mut out = DVector::zeros(2 * free.len());
    for (k, &i) in free.iter().enumerate() {
        let (mut sg, mut sf) = (0.0, 0.0);
        for (j, r) in rho.iter().enumerate() {
            sg += m[(i, j)] * r.g;
            sf += m[(i, j)] * r.f;
        }
        let v = mean_phi(&sensors[i], moments.mean, moments.second) * nalgebra::Vector2::new(sg, sf);
        out[2 * k] = v[0];
        out[2 * k + 1] = v[1];
    }
    out
}
