use nalgebra::{DMatrix, Matrix2};

use crate::calib::SensorTrue;

/// Mean of `Φ_i(t)` for a signal with mean `xbar` and `second = E{x(t) x(t-d)}`
/// (`s²` for the undelayed regressor, `m(d)` for lag `d`).
pub fn mean_phi(s: &SensorTrue, xbar: f64, second: f64) -> Matrix2<f64> {
    let (a, b) = (s.alpha, s.beta);
    Matrix2::new(
        a * b * xbar + a * a * second,
        a * b + a * a * xbar,
        (1.0 + b * b) * xbar + a * b * second,
        1.0 + b * b + a * b * xbar,
    )
}

/// One realization `Φ_i = [α y_reg; β y_reg + 1] [x, 1]` where `x` is the
/// current signal value and `y_reg` the (possibly delayed) regressor reading.
pub fn realized_phi(s: &SensorTrue, x: f64, y_reg: f64) -> Matrix2<f64> {
    let u0 = s.alpha * y_reg;
    let u1 = s.beta * y_reg + 1.0;
    Matrix2::new(u0 * x, u0, u1 * x, u1)
}

/// Block-diagonal `diag(Φ_1, ..., Φ_n)`.
pub fn block_diag_phi(blocks: &[Matrix2<f64>]) -> DMatrix<f64> {
    let n = blocks.len();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for (i, b) in blocks.iter().enumerate() {
        m.fixed_view_mut::<2, 2>(2 * i, 2 * i).copy_from(b);
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurwitzCheck {
    /// `α²(second - x̄²) > 0` and `2αβx̄ + α² second + 1 + β² > 0`.
    pub closed_form: bool,
    /// Both eigenvalues of `-Φ̄` have negative real part.
    pub numeric: bool,
    pub determinant: f64,
    pub trace: f64,
}

impl HurwitzCheck {
    pub fn holds(&self) -> bool {
        self.closed_form
    }
}

/// Whether `-Φ̄_i` is Hurwitz.
pub fn phi_hurwitz(s: &SensorTrue, xbar: f64, second: f64) -> HurwitzCheck {
    let (a, b) = (s.alpha, s.beta);
    let determinant = a * a * (second - xbar * xbar);
    let trace = 2.0 * a * b * xbar + a * a * second + 1.0 + b * b;
    let m = -mean_phi(s, xbar, second);
    let numeric = m.complex_eigenvalues().iter().all(|l| l.re < 0.0);
    HurwitzCheck { closed_form: determinant > 0.0 && trace > 0.0, numeric, determinant, trace }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{SignalGenerator, SignalModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sensor(a: f64, b: f64) -> SensorTrue {
        SensorTrue::new(a, b, 0.0).unwrap()
    }

    #[test]
    fn mean_phi_examples() {
        assert_eq!(mean_phi(&sensor(1.0, 0.0), 0.0, 1.0), Matrix2::identity());
        assert_eq!(mean_phi(&sensor(2.0, 1.0), 0.0, 1.0), Matrix2::new(4.0, 2.0, 2.0, 2.0));
    }

    #[test]
    fn mean_phi_matches_sample_mean() {
        let s = sensor(1.3, -0.4);
        let model = SignalModel::iid_uniform(0.5, 1.5).unwrap();
        let mut g = SignalGenerator::new(model, 8);
        let n = 1_000_000;
        let mut acc = Matrix2::zeros();
        for _ in 0..n {
            let x = g.next_sample();
            acc += realized_phi(&s, x, s.alpha * x + s.beta);
        }
        acc /= n as f64;
        let diff = (acc - mean_phi(&s, 0.5, 1.5)).abs().max();
        assert!(diff < 1e-2, "sample mean differs by {diff}");
    }

    #[test]
    fn delayed_mean_phi_matches_sample_mean() {
        let s = sensor(0.9, 0.6);
        let model = SignalModel::bounded_ar1(0.3, 1.0, 0.8).unwrap();
        let mut g = SignalGenerator::new(model, 12);
        let n = 1_000_000;
        let mut prev = g.next_sample();
        let mut acc = Matrix2::zeros();
        for _ in 0..n {
            let x = g.next_sample();
            acc += realized_phi(&s, x, s.alpha * prev + s.beta);
            prev = x;
        }
        acc /= n as f64;
        let diff = (acc - mean_phi(&s, 0.3, model.moment(1))).abs().max();
        assert!(diff < 2e-2, "sample mean differs by {diff}");
    }

    #[test]
    fn hurwitz_examples() {
        assert!(phi_hurwitz(&sensor(1.0, 0.0), 0.0, 1.0).holds());
        assert!(!phi_hurwitz(&sensor(1.0, 0.0), 1.0, 1.0).holds());
    }

    #[test]
    fn hurwitz_closed_form_agrees_with_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let a = rng.random_range(-3.0..3.0);
            let b = rng.random_range(-3.0..3.0);
            let xbar = rng.random_range(-2.0..2.0);
            let s2 = xbar * xbar + rng.random_range(0.01..2.0);
            let c = phi_hurwitz(&sensor(a, b), xbar, s2);
            assert_eq!(c.closed_form, c.numeric, "a={a} b={b} xbar={xbar} s2={s2}");
        }
    }
}
