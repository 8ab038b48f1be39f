use crate::calib::EquivalentParams;

/// Largest `‖ρ_i - ρ_j‖∞` over node pairs.
pub fn consensus_spread(rho: &[EquivalentParams]) -> f64 {
    let range = |v: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        if lo.is_finite() { hi - lo } else { 0.0 }
    };
    range(&mut rho.iter().map(|r| r.g)).max(range(&mut rho.iter().map(|r| r.f)))
}

/// Largest per-node max-norm distance to the per-node limits.
pub fn distance_to_limit(rho: &[EquivalentParams], limit: &[EquivalentParams]) -> f64 {
    rho.iter().zip(limit).map(|(r, l)| r.max_abs_diff(l)).fold(0.0, f64::max)
}
