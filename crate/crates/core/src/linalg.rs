//! Dense factorization helpers with explicit singularity detection.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use crate::error::{Result, RomError};
use crate::scalar::Real;

/// LU factorization that refuses numerically singular matrices.
pub struct DenseLu<T: Real> {
    lu: LU<T, Dyn, Dyn>,
}

impl<T: Real> DenseLu<T> {
    /// Factors `m`, reporting `context`/`iteration` on singularity.
    pub fn factor(m: DMatrix<T>, context: &'static str, iteration: usize) -> Result<Self> {
        let n = m.nrows();
        if n != m.ncols() {
            return Err(RomError::DimensionMismatch {
                context,
                expected: n,
                actual: m.ncols(),
            });
        }
        let lu = m.lu();
        let u = lu.u();
        let mut max_pivot = T::zero();
        let mut min_pivot = T::max_value().unwrap_or_else(|| T::lit(f64::MAX));
        for i in 0..n {
            let p = u[(i, i)].abs();
            if !p.is_finite() {
                return Err(RomError::SingularSystem { context, iteration });
            }
            max_pivot = max_pivot.max(p);
            min_pivot = min_pivot.min(p);
        }
        let threshold = T::from_usize_lossy(n.max(1)) * T::eps() * max_pivot;
        if n > 0 && (max_pivot == T::zero() || min_pivot <= threshold) {
            return Err(RomError::SingularSystem { context, iteration });
        }
        Ok(Self { lu })
    }

    pub fn solve(&self, rhs: &DVector<T>) -> DVector<T> {
        self.lu.solve(rhs).expect("pivots checked at factorization")
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<T>) -> DMatrix<T> {
        self.lu.solve(rhs).expect("pivots checked at factorization")
    }
}

/// Cholesky factorization; `None` when the matrix is not numerically SPD.
pub fn cholesky<T: Real>(m: &DMatrix<T>) -> Option<Cholesky<T, Dyn>> {
    Cholesky::new(m.clone())
}

/// Maximum absolute asymmetry `|m_ij - m_ji|`.
pub fn asymmetry<T: Real>(m: &DMatrix<T>) -> T {
    let mut worst = T::zero();
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// `max_ij |a_ij - b_ij|`.
pub fn max_abs_diff<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |acc, (x, y)| acc.max((*x - *y).abs()))
}
