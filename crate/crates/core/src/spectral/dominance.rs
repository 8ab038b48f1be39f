use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Operator norm used for the off-diagonal entries of the test matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlockNorm {
    #[default]
    Spectral,
    /// `‖x‖_D = (x* D⁻¹ x)^½` per block, with `A_ii D + D A_iiᵀ = -I`.
    DWeighted,
}

impl BlockNorm {
    pub fn name(self) -> &'static str {
        match self {
            BlockNorm::Spectral => "spectral",
            BlockNorm::DWeighted => "d-weighted",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DominanceReport {
    /// `w_ii = 1`, `w_ij = -‖A_ii⁻¹ A_ij‖`.
    pub w: DMatrix<f64>,
    pub is_m_matrix: bool,
    pub diag_hurwitz: Vec<bool>,
    pub norm: BlockNorm,
}

impl DominanceReport {
    /// M-matrix test passed and every diagonal block is Hurwitz.
    pub fn passes(&self) -> bool {
        self.is_m_matrix && self.diag_hurwitz.iter().all(|&h| h)
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Solves `A D + D Aᵀ = -I` through the Kronecker form.
fn lyapunov(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let k = a.nrows();
    let id = DMatrix::<f64>::identity(k, k);
    let op = id.kronecker(a) + a.kronecker(&id);
    let rhs = -DMatrix::<f64>::identity(k, k).reshape_generic(nalgebra::Dyn(k * k), nalgebra::Dyn(1));
    let x = op.lu().solve(&rhs)?;
    let d = x.reshape_generic(nalgebra::Dyn(k), nalgebra::Dyn(k));
    Some((&d + d.transpose()) * 0.5)
}

/// Builds the test matrix `W` for a matrix partitioned into square blocks of
/// size `block` and checks whether it is an M-matrix.
pub fn dominance_test(a: &DMatrix<f64>, block: usize, norm: BlockNorm) -> Result<DominanceReport> {
    if !a.is_square() || block == 0 || !a.nrows().is_multiple_of(block) {
        return Err(Error::Config(format!("{}x{} matrix cannot be split into {block}x{block} blocks", a.nrows(), a.ncols())));
    }
    let nb = a.nrows() / block;
    let blk = |i: usize, j: usize| a.view((i * block, j * block), (block, block)).into_owned();

    let mut inv = Vec::with_capacity(nb);
    let mut diag_hurwitz = Vec::with_capacity(nb);
    let mut chol_factor = Vec::with_capacity(nb);
    for i in 0..nb {
        let aii = blk(i, i);
        diag_hurwitz.push(super::eigenvalues(&aii).iter().all(|l| l.re < 0.0));
        let ainv = aii.clone().try_inverse().ok_or_else(|| Error::Singular(format!("diagonal block {i}")))?;
        inv.push(ainv);
        if norm == BlockNorm::DWeighted {
            let l = lyapunov(&aii)
                .and_then(|d| d.cholesky())
                .map(|c| c.l())
                .ok_or_else(|| {
                    Error::Singular(format!("Lyapunov solution for diagonal block {i} is not positive definite"))
                })?;
            let l_inv = l.clone().try_inverse().ok_or_else(|| Error::Singular(format!("Cholesky factor {i}")))?;
            chol_factor.push((l, l_inv));
        }
    }

    let mut w = DMatrix::identity(nb, nb);
    for i in 0..nb {
        for j in 0..nb {
            if i == j {
                continue;
            }
            let m = &inv[i] * blk(i, j);
            w[(i, j)] = -match norm {
                BlockNorm::Spectral => spectral_norm(&m),
                BlockNorm::DWeighted => spectral_norm(&(&chol_factor[i].1 * m * &chol_factor[j].0)),
            };
        }
    }
    let is_m_matrix = is_m_matrix(&w);
    Ok(DominanceReport { w, is_m_matrix, diag_hurwitz, norm })
}

/// Nonpositive off-diagonal entries and positive leading principal minors.
pub fn is_m_matrix(w: &DMatrix<f64>) -> bool {
    if !w.is_square() {
        return false;
    }
    let n = w.nrows();
    for i in 0..n {
        for j in 0..n {
            if i != j && w[(i, j)] > 0.0 {
                return false;
            }
        }
    }
    (1..=n).all(|k| w.view((0, 0), (k, k)).into_owned().determinant() > 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn m_matrix_examples() {
        assert!(is_m_matrix(&DMatrix::identity(3, 3)));
        assert!(!is_m_matrix(&DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])));
        assert!(is_m_matrix(&DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0])));
        assert!(is_m_matrix(&DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0])));
        assert!(!is_m_matrix(&DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])));
    }

    #[test]
    fn block_diagonal_gives_identity() {
        let mut a = DMatrix::zeros(4, 4);
        a.view_mut((0, 0), (2, 2)).copy_from(&DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, 0.0, -2.0]));
        a.view_mut((2, 2), (2, 2)).copy_from(&DMatrix::from_row_slice(2, 2, &[-3.0, 0.0, 1.0, -1.0]));
        for norm in [BlockNorm::Spectral, BlockNorm::DWeighted] {
            let r = dominance_test(&a, 2, norm).unwrap();
            assert_eq!(r.w, DMatrix::identity(2, 2));
            assert!(r.passes());
        }
    }

    #[test]
    fn singular_diagonal_block_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, -1.0]);
        assert!(matches!(dominance_test(&a, 1, BlockNorm::Spectral), Err(Error::Singular(_))));
    }

    #[test]
    fn d_weighted_norm_matches_lyapunov_definition() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let d = lyapunov(&a).unwrap();
        let res = &a * &d + &d * a.transpose() + DMatrix::identity(2, 2);
        assert!(res.amax() < 1e-12);
        assert!(d.clone().cholesky().is_some());
    }

    #[test]
    fn strictly_dominant_random_blocks_are_hurwitz() {
        // diagonal blocks -cI + small perturbation, off-diagonal blocks tiny
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let nb = rng.random_range(2..6);
            let a = DMatrix::from_fn(2 * nb, 2 * nb, |r, c| {
                if r / 2 == c / 2 {
                    if r == c { -2.0 } else { rng.random_range(-0.5..0.5) }
                } else {
                    rng.random_range(-0.1..0.1)
                }
            });
            let r = dominance_test(&a, 2, BlockNorm::Spectral).unwrap();
            assert!(r.passes());
            assert!(super::super::eigenvalues(&a).iter().all(|l| l.re < 0.0));
        }
    }

    #[test]
    fn rotational_blocks_defeat_the_block_test() {
        // Known limitation: W is an M-matrix and each diagonal block is
        // Hurwitz, yet the eigenvalues are -ε ± 0.5 ± i.
        let eps = 0.1;
        let mut a = DMatrix::zeros(4, 4);
        for k in 0..2 {
            a.view_mut((2 * k, 2 * k), (2, 2)).copy_from(&DMatrix::from_row_slice(2, 2, &[-eps, 1.0, -1.0, -eps]));
        }
        a.view_mut((0, 2), (2, 2)).fill_with_identity();
        a.view_mut((2, 0), (2, 2)).fill_with_identity();
        a.view_mut((0, 2), (2, 2)).scale_mut(0.5);
        a.view_mut((2, 0), (2, 2)).scale_mut(0.5);
        for norm in [BlockNorm::Spectral, BlockNorm::DWeighted] {
            let r = dominance_test(&a, 2, norm).unwrap();
            assert!(r.passes(), "{norm:?}");
        }
        let max_re = super::super::eigenvalues(&a).iter().map(|l| l.re).fold(f64::MIN, f64::max);
        assert!((max_re - (0.5 - eps)).abs() < 1e-10);
    }
}
