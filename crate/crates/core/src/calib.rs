//! Per-node calibration state and update rules.
//!
//! A node with true response `y = αx + β` applies `z = a*y + b`. The
//! equivalent parameters `g = aα`, `f = aβ + b` describe the calibrated
//! response to the physical signal; consensus is reached when they agree.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Hidden physical characteristics of a sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorTrue {
    pub alpha: f64,
    pub beta: f64,
    /// Variance of the additive measurement noise.
    pub eta_var: f64,
}

impl SensorTrue {
    pub fn new(alpha: f64, beta: f64, eta_var: f64) -> Result<Self> {
        if alpha == 0.0 || !alpha.is_finite() {
            return Err(Error::Sensor(format!("gain must be finite and nonzero, got {alpha}")));
        }
        if !beta.is_finite() {
            return Err(Error::Sensor(format!("offset must be finite, got {beta}")));
        }
        if !(eta_var >= 0.0 && eta_var.is_finite()) {
            return Err(Error::Sensor(format!("noise variance must be finite and nonnegative, got {eta_var}")));
        }
        Ok(Self { alpha, beta, eta_var })
    }

    pub fn ideal() -> Self {
        Self { alpha: 1.0, beta: 0.0, eta_var: 0.0 }
    }
}

/// `y = αx + β + η`.
#[inline]
pub fn sensor_read(s: &SensorTrue, x: f64, eta: f64) -> f64 {
    s.alpha * x + s.beta + eta
}

/// Calibration parameters `θ = (a, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theta {
    pub a: f64,
    pub b: f64,
}

impl Default for Theta {
    fn default() -> Self {
        Self { a: 1.0, b: 0.0 }
    }
}

/// Equivalent gain and offset `ρ = (g, f)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EquivalentParams {
    pub g: f64,
    pub f: f64,
}

impl EquivalentParams {
    pub fn new(g: f64, f: f64) -> Self {
        Self { g, f }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.g - other.g).abs().max((self.f - other.f).abs())
    }
}

/// Message received from one in-neighbour during a round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InboxMessage {
    pub sender: usize,
    /// Sender's output plus any link noise.
    pub z_received: f64,
    /// False when the link was down; such messages are ignored.
    pub present: bool,
}

/// Adjustable state of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibState {
    pub theta: Theta,
    pub pinned: bool,
    history: VecDeque<f64>,
    depth: usize,
}

impl CalibState {
    /// Default initialization `θ = (1, 0)` with a reading buffer of depth `lag + 1`.
    pub fn new(lag: usize) -> Self {
        Self::with_theta(Theta::default(), lag)
    }

    pub fn with_theta(theta: Theta, lag: usize) -> Self {
        Self { theta, pinned: false, history: VecDeque::with_capacity(lag + 1), depth: lag + 1 }
    }

    /// Node whose parameters never change.
    pub fn pinned(theta: Theta) -> Self {
        Self { pinned: true, ..Self::with_theta(theta, 0) }
    }

    pub fn lag(&self) -> usize {
        self.depth - 1
    }

    /// Records the current reading and returns `y(t-d)` once the buffer holds
    /// `d + 1` readings.
    pub fn observe(&mut self, y: f64) -> Option<f64> {
        if self.history.len() == self.depth {
            self.history.pop_front();
        }
        self.history.push_back(y);
        (self.history.len() == self.depth).then(|| self.history[0])
    }

    /// `z = a*y + b`.
    #[inline]
    pub fn output(&self, y: f64) -> f64 {
        self.theta.a * y + self.theta.b
    }

    pub fn equivalent(&self, s: &SensorTrue) -> EquivalentParams {
        equivalent(self, s)
    }

    /// Core gradient step with an explicit regressor, applied in place.
    /// Returns the weighted error sum `Σ γ_ij (z_j - z_i)`.
    #[inline]
    pub fn apply(&mut self, y_now: f64, regressor: f64, inbox: &[InboxMessage], gamma_row: &[f64], delta: f64) -> f64 {
        if self.pinned {
            return 0.0;
        }
        let z = self.output(y_now);
        let s: f64 = inbox.iter().filter(|m| m.present).map(|m| gamma_row[m.sender] * (m.z_received - z)).sum();
        self.theta.a += delta * s * regressor;
        self.theta.b += delta * s;
        s
    }

    /// Compensated step: the basic step plus `δ σ² (Σγ) a` on the gain.
    pub fn apply_known_variance(
        &mut self,
        y_noisy: f64,
        inbox: &[InboxMessage],
        gamma_row: &[f64],
        delta: f64,
        eta_var: f64,
    ) {
        if self.pinned {
            return;
        }
        let a0 = self.theta.a;
        self.apply(y_noisy, y_noisy, inbox, gamma_row, delta);
        self.theta.a += delta * eta_var * nominal_weight(gamma_row) * a0;
    }
}

/// Sum of the positive entries of a weight row. For a row of Γ this is the
/// nominal in-weight `Σ_{j≠i} γ_ij`; the nonpositive diagonal is skipped.
pub fn nominal_weight(gamma_row: &[f64]) -> f64 {
    gamma_row.iter().filter(|&&w| w > 0.0).sum()
}

/// `z = a*y + b`.
pub fn output(c: &CalibState, y: f64) -> f64 {
    c.output(y)
}

/// `(g, f) = (aα, aβ + b)`.
pub fn equivalent(c: &CalibState, s: &SensorTrue) -> EquivalentParams {
    EquivalentParams { g: c.theta.a * s.alpha, f: c.theta.a * s.beta + c.theta.b }
}

/// `θ += δ Σ_j γ_ij (z_j - z_i) [y, 1]`, over messages that arrived.
/// `gamma_row[j]` is `γ_ij`.
pub fn step_basic(c: &CalibState, y: f64, inbox: &[InboxMessage], gamma_row: &[f64], delta: f64) -> CalibState {
    let mut next = c.clone();
    next.apply(y, y, inbox, gamma_row, delta);
    next
}

/// Basic step on a noisy reading with the measurement-noise correction
/// `δ σ² (Σ_j γ_ij) a` added to the gain. `Σγ` is the nominal in-weight,
/// independent of which messages arrived.
pub fn step_known_variance(
    c: &CalibState,
    y_noisy: f64,
    inbox: &[InboxMessage],
    gamma_row: &[f64],
    delta: f64,
    eta_var: f64,
) -> CalibState {
    let mut next = c.clone();
    next.apply_known_variance(y_noisy, inbox, gamma_row, delta, eta_var);
    next
}

/// Instrumental-variable step: prediction errors from current readings,
/// regressor `y(t-d)`.
pub fn step_instrumental(
    c: &CalibState,
    y_now: f64,
    y_delayed: f64,
    inbox: &[InboxMessage],
    gamma_row: &[f64],
    delta: f64,
) -> CalibState {
    let mut next = c.clone();
    next.apply(y_now, y_delayed, inbox, gamma_row, delta);
    next
}

/// Step-size sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant { delta: f64 },
    /// `δ(t) = m1 / (m2 + t^μ)` with `1/2 < μ ≤ 1`.
    Power { m1: f64, m2: f64, mu: f64 },
}

impl StepSchedule {
    pub fn constant(delta: f64) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::Schedule(format!("step {delta} must be finite and nonnegative")));
        }
        Ok(StepSchedule::Constant { delta })
    }

    pub fn power(m1: f64, m2: f64, mu: f64) -> Result<Self> {
        if !(mu > 0.5 && mu <= 1.0) {
            return Err(Error::Schedule(format!(
                "exponent {mu} outside (1/2, 1]; the steps would not be square-summable yet non-summable"
            )));
        }
        if !(m1 > 0.0 && m1.is_finite()) {
            return Err(Error::Schedule(format!("m1 = {m1} must be positive")));
        }
        if !(m2 >= 0.0 && m2.is_finite()) {
            return Err(Error::Schedule(format!("m2 = {m2} must be nonnegative")));
        }
        Ok(StepSchedule::Power { m1, m2, mu })
    }

    /// `δ(t)`. Simulations use `δ(t+1)` in round `t`, so `t = 0` is only
    /// evaluated by callers who ask for it (and is infinite for `m2 = 0`).
    pub fn step_size(&self, t: u64) -> f64 {
        match *self {
            StepSchedule::Constant { delta } => delta,
            StepSchedule::Power { m1, m2, mu } => m1 / (m2 + (t as f64).powf(mu)),
        }
    }

    pub fn is_decreasing(&self) -> bool {
        matches!(self, StepSchedule::Power { .. })
    }
}

pub fn step_size(s: &StepSchedule, t: u64) -> f64 {
    s.step_size(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn msg(sender: usize, z: f64) -> InboxMessage {
        InboxMessage { sender, z_received: z, present: true }
    }

    #[test]
    fn sensor_read_examples() {
        assert_eq!(sensor_read(&SensorTrue::ideal(), 3.7, 0.0), 3.7);
        assert_eq!(sensor_read(&SensorTrue::new(2.0, -1.0, 0.0).unwrap(), 1.0, 0.0), 1.0);
        assert!((sensor_read(&SensorTrue::new(1.3, 0.2, 0.0).unwrap(), 0.0, 0.05) - 0.25).abs() < 1e-15);
        assert!(SensorTrue::new(0.0, 1.0, 0.0).is_err());
        assert!(SensorTrue::new(1.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn output_examples() {
        assert_eq!(output(&CalibState::new(0), 5.0), 5.0);
        let c = CalibState::with_theta(Theta { a: 0.5, b: 1.0 }, 0);
        assert_eq!(output(&c, 4.0), 3.0);
        let x = 1.234;
        assert_eq!(output(&CalibState::new(0), sensor_read(&SensorTrue::ideal(), x, 0.0)), x);
    }

    #[test]
    fn basic_step_examples() {
        let c = CalibState::new(0);
        let row = [0.0, 1.0, 1.0];
        // agreeing neighbours
        assert_eq!(step_basic(&c, 2.0, &[msg(1, 2.0), msg(2, 2.0)], &row, 0.1), c);
        // everything dropped
        let dropped = [InboxMessage { present: false, ..msg(1, 9.0) }];
        assert_eq!(step_basic(&c, 2.0, &dropped, &row, 0.1), c);
        // hand-evaluated single neighbour: own output 1 from y=2 with θ=(0.5,0)
        let c = CalibState::with_theta(Theta { a: 0.5, b: 0.0 }, 0);
        let n = step_basic(&c, 2.0, &[msg(1, 2.0)], &[0.0, 1.0], 0.01);
        assert!((n.theta.a - 0.52).abs() < 1e-15);
        assert!((n.theta.b - 0.01).abs() < 1e-15);
    }

    #[test]
    fn known_variance_examples() {
        let c = CalibState::with_theta(Theta { a: 0.8, b: 0.1 }, 0);
        let inbox = [msg(1, 1.5), msg(2, 0.2)];
        let row = [-2.0, 1.0, 1.0];
        assert_eq!(step_known_variance(&c, 1.1, &inbox, &row, 0.01, 0.0), step_basic(&c, 1.1, &inbox, &row, 0.01));
        // consensus is not a fixed point once compensation is on
        let z = c.output(1.1);
        let n = step_known_variance(&c, 1.1, &[msg(1, z), msg(2, z)], &row, 0.01, 0.1);
        assert!((n.theta.a - (0.8 + 0.01 * 0.1 * 2.0 * 0.8)).abs() < 1e-15);
        assert_eq!(n.theta.b, 0.1);
        assert_eq!(step_known_variance(&c, 1.1, &inbox, &row, 0.0, 0.1), c);
    }

    #[test]
    fn instrumental_examples() {
        let c = CalibState::with_theta(Theta { a: 1.2, b: -0.3 }, 0);
        let inbox = [msg(1, 0.7), msg(2, 2.5)];
        let row = [0.0, 0.5, 2.0];
        assert_eq!(step_instrumental(&c, 1.4, 1.4, &inbox, &row, 0.02), step_basic(&c, 1.4, &inbox, &row, 0.02));
        let z = c.output(1.4);
        assert_eq!(step_instrumental(&c, 1.4, 9.0, &[msg(1, z)], &row, 0.02), c);
        // ε = -0.5 with y(t-1) = 3: own output 1 from y=1, neighbour says 0.5
        let c = CalibState::new(1);
        let n = step_instrumental(&c, 1.0, 3.0, &[msg(1, 0.5)], &[0.0, 1.0], 0.01);
        assert!((n.theta.a - (1.0 - 0.015)).abs() < 1e-15);
        assert!((n.theta.b + 0.005).abs() < 1e-15);
    }

    #[test]
    fn history_buffer_idles_until_full() {
        let mut c = CalibState::new(2);
        assert_eq!(c.observe(1.0), None);
        assert_eq!(c.observe(2.0), None);
        assert_eq!(c.observe(3.0), Some(1.0));
        assert_eq!(c.observe(4.0), Some(2.0));
        let mut c0 = CalibState::new(0);
        assert_eq!(c0.observe(5.0), Some(5.0));
    }

    #[test]
    fn pinned_never_moves() {
        let mut c = CalibState::pinned(Theta { a: 1.0, b: 0.0 });
        let before = c.clone();
        c.apply(3.0, 3.0, &[msg(1, 10.0)], &[0.0, 1.0], 0.5);
        c.apply_known_variance(3.0, &[msg(1, 10.0)], &[0.0, 1.0], 0.5, 0.3);
        assert_eq!(c, before);
    }

    #[test]
    fn equivalent_examples() {
        let s = SensorTrue::new(1.2, 0.3, 0.0).unwrap();
        assert_eq!(equivalent(&CalibState::new(0), &s), EquivalentParams::new(1.2, 0.3));
        let c = CalibState::with_theta(Theta { a: 1.0 / 1.2, b: -0.3 / 1.2 }, 0);
        let e = equivalent(&c, &s);
        assert!((e.g - 1.0).abs() < 1e-15 && e.f.abs() < 1e-15);
        let c = CalibState::with_theta(Theta { a: 0.0, b: 0.0 }, 0);
        assert_eq!(equivalent(&c, &s), EquivalentParams::new(0.0, 0.0));
    }

    #[test]
    fn step_size_examples() {
        let c = StepSchedule::constant(0.01).unwrap();
        assert_eq!(c.step_size(0), 0.01);
        assert_eq!(c.step_size(12345), 0.01);
        let p = StepSchedule::power(0.01, 0.0, 0.6).unwrap();
        assert_eq!(p.step_size(1), 0.01);
        let expected = 0.01 / 2f64.powi(6);
        assert!((p.step_size(1024) / expected - 1.0).abs() < 1e-14);
        assert!((p.step_size(1024) - 1.5625e-4).abs() < 1e-16);
        assert!(StepSchedule::power(0.01, 0.0, 0.5).is_err());
        assert!(StepSchedule::power(0.01, 0.0, 1.2).is_err());
        assert!(StepSchedule::constant(-1.0).is_err());
    }

    proptest! {
        // The θ update, mapped through ρ = [[α,0],[β,1]]θ, equals
        // ρ_i += δ Σ γ_ij Φ_i(t) (ρ_j - ρ_i) with Φ_i = [αy; βy+1][x, 1].
        #[test]
        fn rho_update_is_affine_covariant(
            alphas in prop::collection::vec(0.2f64..3.0, 4),
            betas in prop::collection::vec(-2.0f64..2.0, 4),
            thetas in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 4),
            weights in prop::collection::vec(0.0f64..2.0, 3),
            x in -3.0f64..3.0,
            delta in 0.0f64..0.1,
        ) {
            let sensors: Vec<SensorTrue> =
                alphas.iter().zip(&betas).map(|(&a, &b)| SensorTrue::new(a, b, 0.0).unwrap()).collect();
            let states: Vec<CalibState> =
                thetas.iter().map(|&(a, b)| CalibState::with_theta(Theta { a, b }, 0)).collect();
            let ys: Vec<f64> = sensors.iter().map(|s| sensor_read(s, x, 0.0)).collect();
            let mut row = vec![0.0];
            row.extend(&weights);
            let inbox: Vec<InboxMessage> = (1..4).map(|j| msg(j, states[j].output(ys[j]))).collect();
            let next = step_basic(&states[0], ys[0], &inbox, &row, delta);
            let got = equivalent(&next, &sensors[0]);

            let s0 = &sensors[0];
            let rho: Vec<EquivalentParams> = states.iter().zip(&sensors).map(|(c, s)| equivalent(c, s)).collect();
            let (mut dg, mut df) = (0.0, 0.0);
            for j in 1..4 {
                let proj = x * (rho[j].g - rho[0].g) + (rho[j].f - rho[0].f);
                dg += row[j] * s0.alpha * ys[0] * proj;
                df += row[j] * (s0.beta * ys[0] + 1.0) * proj;
            }
            let tol = 1e-12 * (1.0 + got.g.abs() + got.f.abs());
            prop_assert!((got.g - (rho[0].g + delta * dg)).abs() < tol);
            prop_assert!((got.f - (rho[0].f + delta * df)).abs() < tol);
        }

        #[test]
        fn consensus_is_fixed_point(
            a in -2.0f64..2.0, b in -2.0f64..2.0, y in -5.0f64..5.0, yd in -5.0f64..5.0,
            w in prop::collection::vec(0.0f64..3.0, 5), delta in 0.0f64..1.0,
        ) {
            let c = CalibState::with_theta(Theta { a, b }, 0);
            let z = c.output(y);
            let inbox: Vec<InboxMessage> = (0..5).map(|j| msg(j, z)).collect();
            prop_assert_eq!(step_basic(&c, y, &inbox, &w, delta), c.clone());
            prop_assert_eq!(step_instrumental(&c, y, yd, &inbox, &w, delta), c);
        }
    }
}
