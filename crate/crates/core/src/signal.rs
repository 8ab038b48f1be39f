//! Measured signal and noise processes.
//!
//! Every random quantity is drawn from its own ChaCha stream (signal `x`,
//! link state `u`, link noise `ξ`, measurement noise `η`), all derived from a
//! single run seed, so reordering or skipping draws in one stream never
//! perturbs another.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Assumption, Error, Result};
use crate::graph::{build_gamma, GammaMatrix, WeightedDigraph};

/// Burn-in applied to autoregressive signals before the first emitted sample.
pub const AR_BURN_IN: usize = 1000;

/// Relative margin below which a lagged-excitation check is reported as weak.
pub const WEAK_MARGIN: f64 = 1e-3;

/// SplitMix64 finalizer over `(master, index)`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Signal = 0,
    LinkState = 1,
    LinkNoise = 2,
    Measurement = 3,
}

/// Independent generator for one stream of a run.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalKind {
    IidUniform,
    IidGaussian,
    BoundedAr1,
}

impl SignalKind {
    pub fn name(self) -> &'static str {
        match self {
            SignalKind::IidUniform => "iid-uniform",
            SignalKind::IidGaussian => "iid-gaussian",
            SignalKind::BoundedAr1 => "bounded-ar1",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "iid-uniform" => Ok(SignalKind::IidUniform),
            "iid-gaussian" => Ok(SignalKind::IidGaussian),
            "bounded-ar1" => Ok(SignalKind::BoundedAr1),
            other => Err(Error::Signal(format!("unknown signal kind {other:?}"))),
        }
    }
}

/// Stationary signal with closed-form moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalModel {
    kind: SignalKind,
    mean: f64,
    s2: f64,
    phi: f64,
}

impl SignalModel {
    /// `s2` is the second moment E{x²}, not the variance.
    pub fn new(kind: SignalKind, mean: f64, s2: f64, phi: f64) -> Result<Self> {
        if !(mean.is_finite() && s2.is_finite() && phi.is_finite()) {
            return Err(Error::Signal("signal parameters must be finite".into()));
        }
        if s2 - mean * mean <= 0.0 {
            return Err(Error::Assumption {
                assumption: Assumption::A4,
                detail: format!("variance s2 - mean^2 = {} is not positive", s2 - mean * mean),
            });
        }
        match kind {
            SignalKind::BoundedAr1 if phi.abs() >= 1.0 => {
                Err(Error::Signal(format!("autoregressive coefficient {phi} outside (-1, 1)")))
            }
            SignalKind::BoundedAr1 => Ok(Self { kind, mean, s2, phi }),
            _ => Ok(Self { kind, mean, s2, phi: 0.0 }),
        }
    }

    pub fn iid_uniform(mean: f64, s2: f64) -> Result<Self> {
        Self::new(SignalKind::IidUniform, mean, s2, 0.0)
    }

    pub fn iid_gaussian(mean: f64, s2: f64) -> Result<Self> {
        Self::new(SignalKind::IidGaussian, mean, s2, 0.0)
    }

    pub fn bounded_ar1(mean: f64, s2: f64, phi: f64) -> Result<Self> {
        Self::new(SignalKind::BoundedAr1, mean, s2, phi)
    }

    pub fn kind(&self) -> SignalKind {
        self.kind
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn second_moment(&self) -> f64 {
        self.s2
    }

    pub fn variance(&self) -> f64 {
        self.s2 - self.mean * self.mean
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Half-width of the uniform innovation (or of the iid uniform law).
    fn half_width(&self) -> f64 {
        (3.0 * (1.0 - self.phi * self.phi) * self.variance()).sqrt()
    }

    /// Almost-sure bound on |x(t)|; `None` for Gaussian signals.
    pub fn bound(&self) -> Option<f64> {
        match self.kind {
            SignalKind::IidGaussian => None,
            _ => Some(self.mean.abs() + self.half_width() / (1.0 - self.phi.abs())),
        }
    }

    /// `m(d) = E{x(t) x(t-d)}`.
    pub fn moment(&self, lag: usize) -> f64 {
        if lag == 0 {
            return self.s2;
        }
        let m2 = self.mean * self.mean;
        match self.kind {
            SignalKind::BoundedAr1 => m2 + self.variance() * self.phi.powi(lag as i32),
            _ => m2,
        }
    }

    /// Lagged excitation `m(d) > x̄²`.
    pub fn check_a4prime(&self, lag: usize) -> LagCheck {
        let margin = self.moment(lag) - self.mean * self.mean;
        LagCheck {
            lag,
            margin,
            holds: margin > 0.0,
            weak: margin > 0.0 && margin < WEAK_MARGIN * self.variance(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagCheck {
    pub lag: usize,
    /// `m(d) - x̄²`.
    pub margin: f64,
    pub holds: bool,
    /// Holds, but by less than `WEAK_MARGIN` of the variance.
    pub weak: bool,
}

/// Sequential sampler for a [`SignalModel`].
#[derive(Debug, Clone)]
pub struct SignalGenerator {
    model: SignalModel,
    rng: ChaCha8Rng,
    state: f64,
    next_t: u64,
}

impl SignalGenerator {
    pub fn new(model: SignalModel, seed: u64) -> Self {
        Self::from_rng(model, stream_rng(seed, Stream::Signal))
    }

    pub fn from_rng(model: SignalModel, rng: ChaCha8Rng) -> Self {
        let mut g = Self { model, rng, state: model.mean, next_t: 0 };
        if model.kind == SignalKind::BoundedAr1 {
            for _ in 0..AR_BURN_IN {
                g.advance();
            }
        }
        g
    }

    pub fn model(&self) -> &SignalModel {
        &self.model
    }

    fn advance(&mut self) -> f64 {
        let m = &self.model;
        self.state = match m.kind {
            SignalKind::IidUniform => m.mean + m.half_width() * (2.0 * self.rng.random::<f64>() - 1.0),
            SignalKind::IidGaussian => {
                m.mean + m.variance().sqrt() * self.rng.sample::<f64, _>(StandardNormal)
            }
            SignalKind::BoundedAr1 => {
                let w = m.half_width() * (2.0 * self.rng.random::<f64>() - 1.0);
                m.mean + m.phi * (self.state - m.mean) + w
            }
        };
        self.state
    }

    /// Sample at round `t`. Rounds must not go backwards; repeating the most
    /// recent round returns the same value and skipped rounds are drawn and
    /// discarded.
    pub fn sample(&mut self, t: u64) -> Result<f64> {
        if t + 1 < self.next_t {
            return Err(Error::NonMonotoneRound { last: self.next_t - 1, requested: t });
        }
        while self.next_t <= t {
            self.advance();
            self.next_t += 1;
        }
        Ok(self.state)
    }

    /// Next sample in sequence.
    pub fn next_sample(&mut self) -> f64 {
        self.next_t += 1;
        self.advance()
    }
}

/// Distribution of the additive link noise; both have zero mean and the
/// configured variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseDist {
    #[default]
    Uniform,
    Gaussian,
}

impl NoiseDist {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(NoiseDist::Uniform),
            "gaussian" => Ok(NoiseDist::Gaussian),
            other => Err(Error::Config(format!("unknown noise distribution {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NoiseDist::Uniform => "uniform",
            NoiseDist::Gaussian => "gaussian",
        }
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(self, var: f64, rng: &mut R) -> f64 {
        match self {
            NoiseDist::Uniform => (3.0 * var).sqrt() * (2.0 * rng.random::<f64>() - 1.0),
            NoiseDist::Gaussian => var.sqrt() * rng.sample::<f64, _>(StandardNormal),
        }
    }
}

/// Per-arc parameter with a default and sparse overrides keyed by
/// `(receiver, sender)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcParam {
    pub default: f64,
    pub overrides: BTreeMap<(usize, usize), f64>,
}

impl ArcParam {
    pub fn uniform(value: f64) -> Self {
        Self { default: value, overrides: BTreeMap::new() }
    }

    pub fn get(&self, receiver: usize, sender: usize) -> f64 {
        self.overrides.get(&(receiver, sender)).copied().unwrap_or(self.default)
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.default).chain(self.overrides.values().copied())
    }
}

/// Channel and measurement noise configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    /// Link-up probability `p_ij`.
    pub up_prob: ArcParam,
    /// Variance of the additive link noise `ξ_ij`.
    pub link_var: ArcParam,
    pub link_dist: NoiseDist,
    /// Per-node variance of the measurement noise `η_i`.
    pub meas_var: Vec<f64>,
}

impl NoiseSpec {
    /// Perfect channels and noiseless sensors.
    pub fn noiseless(n: usize) -> Self {
        Self {
            up_prob: ArcParam::uniform(1.0),
            link_var: ArcParam::uniform(0.0),
            link_dist: NoiseDist::Uniform,
            meas_var: vec![0.0; n],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.up_prob.values().any(|p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::Config("link-up probabilities must lie in (0, 1]".into()));
        }
        if self.link_var.values().chain(self.meas_var.iter().copied()).any(|v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("noise variances must be finite and nonnegative".into()));
        }
        if self.meas_var.len() != n {
            return Err(Error::Config(format!(
                "{} measurement-noise variances given for {n} nodes",
                self.meas_var.len()
            )));
        }
        let keys = self.up_prob.overrides.keys().chain(self.link_var.overrides.keys());
        if let Some(&(i, j)) = keys.into_iter().find(|&&(i, j)| i >= n || j >= n) {
            return Err(Error::Config(format!("noise override for arc {j}->{i} out of range")));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.up_prob.values().all(|p| p == 1.0)
            && self.link_var.values().all(|v| v == 0.0)
            && self.meas_var.iter().all(|&v| v == 0.0)
    }

    /// Expected weight matrix with entries `γ_ij p_ij`.
    pub fn expected_gamma(&self, g: &WeightedDigraph) -> Result<GammaMatrix> {
        let lossy = g.map_weights(|from, to, w| w * self.up_prob.get(to, from))?;
        Ok(build_gamma(&lossy))
    }
}

/// Realized state of one arc in one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkEvent {
    pub from: usize,
    pub to: usize,
    pub up: bool,
    pub xi: f64,
}

/// Draws link states and link noise from their dedicated streams.
#[derive(Debug, Clone)]
pub struct LinkSampler {
    u_rng: ChaCha8Rng,
    xi_rng: ChaCha8Rng,
}

impl LinkSampler {
    pub fn new(seed: u64) -> Self {
        Self { u_rng: stream_rng(seed, Stream::LinkState), xi_rng: stream_rng(seed, Stream::LinkNoise) }
    }

    /// One draw of `(u, ξ)` for the arc `sender -> receiver`. Both streams
    /// advance on every call regardless of the outcome.
    #[inline]
    pub fn draw(&mut self, spec: &NoiseSpec, receiver: usize, sender: usize) -> (bool, f64) {
        let up = self.u_rng.random::<f64>() < spec.up_prob.get(receiver, sender);
        let xi = spec.link_dist.draw(spec.link_var.get(receiver, sender), &mut self.xi_rng);
        (up, xi)
    }

    /// Events for every arc of `g`, ordered by receiver then sender.
    pub fn sample_link_events(&mut self, spec: &NoiseSpec, g: &WeightedDigraph) -> Vec<LinkEvent> {
        g.arcs()
            .map(|(from, to, _)| {
                let (up, xi) = self.draw(spec, to, from);
                LinkEvent { from, to, up, xi }
            })
            .collect()
    }
}

/// Per-node measurement noise from its dedicated stream.
#[derive(Debug, Clone)]
pub struct MeasurementNoise {
    rng: ChaCha8Rng,
}

impl MeasurementNoise {
    pub fn new(seed: u64) -> Self {
        Self { rng: stream_rng(seed, Stream::Measurement) }
    }

    /// Zero-mean Gaussian draw; always consumes one normal variate.
    #[inline]
    pub fn draw(&mut self, var: f64) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        var.sqrt() * z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn iid_uniform_mean() {
        let mut g = SignalGenerator::new(SignalModel::iid_uniform(0.0, 1.0).unwrap(), 1);
        let xs: Vec<f64> = (0..1_000_000).map(|_| g.next_sample()).collect();
        let (m, v) = mean_var(&xs);
        assert!(m.abs() < 3e-3, "mean {m}");
        assert!((v - 1.0).abs() < 1e-2);
        assert!(xs.iter().all(|x| x.abs() <= 3f64.sqrt()));
    }

    #[test]
    fn ar1_with_zero_phi_is_white() {
        let mut g = SignalGenerator::new(SignalModel::bounded_ar1(0.0, 1.0, 0.0).unwrap(), 2);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| g.next_sample()).collect();
        let r1 = xs.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n - 1) as f64;
        assert!(r1.abs() < 3.0 / (n as f64).sqrt(), "lag-1 autocorrelation {r1}");
    }

    #[test]
    fn ar1_respects_bound() {
        // choose s2 so that K = 10 for phi = 0.8
        let c = 10.0 * 0.2;
        let var = c * c / (3.0 * (1.0 - 0.64));
        let model = SignalModel::bounded_ar1(0.0, var, 0.8).unwrap();
        assert!((model.bound().unwrap() - 10.0).abs() < 1e-12);
        let mut g = SignalGenerator::new(model, 3);
        assert!((0..200_000).all(|_| g.next_sample().abs() <= 10.0));
    }

    #[test]
    fn ar1_moments() {
        let model = SignalModel::bounded_ar1(0.0, 1.0, 0.8).unwrap();
        assert!((model.moment(1) - 0.8).abs() < 1e-15);
        assert_eq!(model.moment(0), 1.0);
        let mut g = SignalGenerator::new(model, 4);
        let xs: Vec<f64> = (0..1_000_000).map(|_| g.next_sample()).collect();
        let r1 = xs.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (xs.len() - 1) as f64;
        // long-run variance of the lag-1 product for AR(1) is a few times 1/n
        assert!((r1 - 0.8).abs() < 0.01, "estimated m(1) = {r1}");
        let (m, v) = mean_var(&xs[..500_000]);
        assert!(m.abs() < 0.02 && (v - 1.0).abs() < 0.03);
    }

    #[test]
    fn iid_moments_and_lag_checks() {
        let iid = SignalModel::iid_gaussian(0.5, 1.25).unwrap();
        assert_eq!(iid.moment(0), 1.25);
        assert_eq!(iid.moment(1), 0.25);
        assert!(!iid.check_a4prime(1).holds);
        let ar = SignalModel::bounded_ar1(0.0, 1.0, 0.8).unwrap();
        let c1 = ar.check_a4prime(1);
        assert!(c1.holds && !c1.weak);
        let c50 = ar.check_a4prime(50);
        assert!(c50.holds && c50.weak);
        assert!((c50.margin - 0.8f64.powi(50)).abs() < 1e-18);
        assert!((c50.margin - 1.43e-5).abs() < 1e-7);
    }

    #[test]
    fn excitation_enforced() {
        assert!(matches!(
            SignalModel::iid_uniform(1.0, 1.0),
            Err(Error::Assumption { assumption: Assumption::A4, .. })
        ));
        assert!(SignalModel::bounded_ar1(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn non_monotone_round_rejected() {
        let mut g = SignalGenerator::new(SignalModel::bounded_ar1(0.0, 1.0, 0.5).unwrap(), 5);
        let a = g.sample(3).unwrap();
        assert_eq!(g.sample(3).unwrap(), a);
        g.sample(7).unwrap();
        assert!(matches!(g.sample(2), Err(Error::NonMonotoneRound { last: 7, requested: 2 })));
    }

    #[test]
    fn ar1_stationary_after_burn_in() {
        let model = SignalModel::bounded_ar1(2.0, 5.0, 0.8).unwrap();
        let mut g = SignalGenerator::new(model, 6);
        let first: Vec<f64> = (0..50_000).map(|_| g.next_sample()).collect();
        let (m, v) = mean_var(&first);
        // AR(1) inflates the standard error of the mean by sqrt((1+φ)/(1-φ)) = 3
        assert!((m - 2.0).abs() < 3.0 * 3.0 / (50_000f64).sqrt(), "mean {m}");
        assert!((v - 1.0).abs() < 0.05, "variance {v}");
    }

    #[test]
    fn determinism() {
        let model = SignalModel::bounded_ar1(0.0, 1.0, 0.8).unwrap();
        let a: Vec<f64> = {
            let mut g = SignalGenerator::new(model, 42);
            (0..100).map(|_| g.next_sample()).collect()
        };
        let mut g = SignalGenerator::new(model, 42);
        let b: Vec<f64> = (0..100).map(|_| g.next_sample()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn noiseless_channel() {
        let g = WeightedDigraph::complete(3, 1.0).unwrap();
        let spec = NoiseSpec::noiseless(3);
        let mut s = LinkSampler::new(1);
        for _ in 0..100 {
            assert!(s.sample_link_events(&spec, &g).iter().all(|e| e.up && e.xi == 0.0));
        }
    }

    #[test]
    fn link_up_rate_and_noise_variance() {
        let spec = NoiseSpec {
            up_prob: ArcParam::uniform(0.2),
            link_var: ArcParam::uniform(0.1),
            link_dist: NoiseDist::Uniform,
            meas_var: vec![0.0; 2],
        };
        let mut s = LinkSampler::new(9);
        let n = 100_000;
        let draws: Vec<(bool, f64)> = (0..n).map(|_| s.draw(&spec, 1, 0)).collect();
        let rate = draws.iter().filter(|d| d.0).count() as f64 / n as f64;
        let sd = (0.2 * 0.8 / n as f64).sqrt();
        assert!((rate - 0.2).abs() < 3.0 * sd, "rate {rate}");
        let xi: Vec<f64> = draws.iter().map(|d| d.1).collect();
        let (_, v) = mean_var(&xi);
        // uniform: Var(ξ²) = 0.8 σ⁴
        let sd_v = (0.8 * 0.01 / n as f64).sqrt();
        assert!((v - 0.1).abs() < 3.0 * sd_v, "variance {v}");
        let gauss = NoiseSpec { link_dist: NoiseDist::Gaussian, ..spec };
        let xi: Vec<f64> = (0..n).map(|_| s.draw(&gauss, 1, 0).1).collect();
        let (_, v) = mean_var(&xi);
        assert!((v - 0.1).abs() < 3.0 * (2.0 * 0.01 / n as f64).sqrt());
    }

    #[test]
    fn streams_are_independent_of_each_other() {
        // the link-noise stream does not depend on how the link-state stream is consumed
        let mut a = LinkSampler::new(11);
        let mut b = LinkSampler::new(11);
        for _ in 0..17 {
            let _: f64 = b.u_rng.random();
        }
        let xa: Vec<f64> = (0..10).map(|_| a.xi_rng.random()).collect();
        let xb: Vec<f64> = (0..10).map(|_| b.xi_rng.random()).collect();
        assert_eq!(xa, xb);
        let x0: f64 = stream_rng(11, Stream::Signal).random();
        let x1: f64 = stream_rng(11, Stream::Measurement).random();
        assert_ne!(x0, x1);
    }

    #[test]
    fn expected_gamma_scales_weights() {
        let g = WeightedDigraph::complete(3, 2.0).unwrap();
        let mut spec = NoiseSpec::noiseless(3);
        spec.up_prob = ArcParam::uniform(0.8);
        spec.up_prob.overrides.insert((0, 1), 0.5);
        let gb = spec.expected_gamma(&g).unwrap();
        let m = gb.as_matrix();
        assert!((m[(0, 1)] - 1.0).abs() < 1e-15);
        assert!((m[(0, 2)] - 1.6).abs() < 1e-15);
        assert!((m[(0, 0)] + 2.6).abs() < 1e-15);
    }

    #[test]
    fn seed_derivation_is_deterministic_and_spread() {
        assert_eq!(derive_seed(1, 2), derive_seed(1, 2));
        let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|i| derive_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }
}
