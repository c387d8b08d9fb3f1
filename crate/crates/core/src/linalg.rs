//! Small dense helpers on top of nalgebra: a rank-checked Cholesky factor,
//! symmetric inverse square roots and eigenvalue checks.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::{Error, Result};

/// Relative pivot threshold used for every rank decision in the crate.
pub const RANK_TOL: f64 = 1e-10;

/// Cholesky factor of a symmetric positive definite matrix, rejected when
/// the smallest pivot of the unit-diagonal rescaled matrix falls below
/// `RANK_TOL` times the largest one.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || n != m.ncols() {
            return Err(Error::Dimension("factorization needs a non-empty square matrix".into()));
        }
        let d: DVector<f64> = m.diagonal();
        if d.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::RankDeficient { ratio: 0.0 });
        }
        let s = d.map(|v| 1.0 / libm::sqrt(v));
        let scaled = DMatrix::from_fn(n, n, |i, j| m[(i, j)] * s[i] * s[j]);
        let scaled_chol = Cholesky::new(scaled).ok_or(Error::RankDeficient { ratio: 0.0 })?;
        let l = scaled_chol.l_dirty();
        let pivots = (0..n).map(|i| l[(i, i)] * l[(i, i)]);
        let (lo, hi) = pivots.fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p), hi.max(p)));
        let ratio = lo / hi;
        if !(ratio >= RANK_TOL) {
            return Err(Error::RankDeficient { ratio });
        }
        let chol = Cholesky::new(m.clone()).ok_or(Error::RankDeficient { ratio })?;
        Ok(Self { chol })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let inv = self.chol.inverse();
        symmetrize(&inv)
    }
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

/// `A · B · A` for symmetric `A`, symmetrized.
pub fn sandwich(bread: &DMatrix<f64>, filling: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&(bread * filling * bread))
}

/// Symmetric inverse square root by eigendecomposition. Eigenvalues below
/// `tol` are treated as zero (pseudo-inverse root); the flag reports
/// whether that happened.
pub fn sym_inv_sqrt(m: &DMatrix<f64>, tol: f64) -> (DMatrix<f64>, bool) {
    let eig = SymmetricEigen::new(m.clone());
    let mut near_singular = false;
    let inv_root = eig.eigenvalues.map(|l| {
        if l < tol {
            near_singular = true;
            0.0
        } else {
            1.0 / libm::sqrt(l)
        }
    });
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&inv_root) * v.transpose();
    (symmetrize(&out), near_singular)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Outer product `v vᵀ` added into `acc` with weight `w`.
pub fn add_outer(acc: &mut DMatrix<f64>, v: &DVector<f64>, w: f64) {
    let k = v.len();
    for j in 0..k {
        let vj = v[j] * w;
        for i in 0..k {
            acc[(i, j)] += v[i] * vj;
        }
    }
}
