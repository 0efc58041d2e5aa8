use nalgebra::{DMatrix, DVector};

use super::{FomProblem, ParameterBox, ParameterVector, QoiFunctional, ResidualKind};
use crate::error::Result;
use crate::scalar::Real;
use crate::subspaces::MetricKind;

const BUMP_AMPLITUDE: f64 = 100.0;
const BUMP_WIDTH: f64 = 0.1;
const BUMP_CENTER: (f64, f64) = (0.5, 0.5);

/// Semilinear reaction-diffusion `-div(mu1 grad u) + mu2 u^3 = mu3 g` on the
/// unit square with zero Dirichlet data, `g` a fixed Gaussian bump.
///
/// Five-point finite differences on the `(m-1)^2` interior nodes give
/// `r(w; mu) = mu3 g - mu1 L w - mu2 w.^3`. Box: `mu1 in [0.5, 2]`,
/// `mu2 in [0, 5]`, `mu3 in [1, 3]`.
#[derive(Debug, Clone)]
pub struct NonlinearReaction<T: Real> {
    m: usize,
    laplacian: DMatrix<T>,
    bump: DVector<T>,
    params: ParameterBox<T>,
}

impl<T: Real> NonlinearReaction<T> {
    pub fn new(m: usize) -> Self {
        assert!(m >= 3, "grid needs at least three intervals");
        let k = m - 1;
        let n = k * k;
        let h = 1.0 / m as f64;
        let inv_h2 = T::lit(1.0 / (h * h));
        let idx = |i: usize, j: usize| j * k + i;
        let mut laplacian = DMatrix::zeros(n, n);
        let mut bump = DVector::zeros(n);
        for j in 0..k {
            for i in 0..k {
                let p = idx(i, j);
                laplacian[(p, p)] = T::lit(4.0) * inv_h2;
                if i > 0 {
                    laplacian[(p, idx(i - 1, j))] = -inv_h2;
                }
                if i + 1 < k {
                    laplacian[(p, idx(i + 1, j))] = -inv_h2;
                }
                if j > 0 {
                    laplacian[(p, idx(i, j - 1))] = -inv_h2;
                }
                if j + 1 < k {
                    laplacian[(p, idx(i, j + 1))] = -inv_h2;
                }
                let x = (i + 1) as f64 * h - BUMP_CENTER.0;
                let y = (j + 1) as f64 * h - BUMP_CENTER.1;
                bump[p] = T::lit(
                    BUMP_AMPLITUDE * (-(x * x + y * y) / (2.0 * BUMP_WIDTH * BUMP_WIDTH)).exp(),
                );
            }
        }
        Self {
            m,
            laplacian,
            bump,
            params: ParameterBox::new(vec![
                (T::lit(0.5), T::lit(2.0)),
                (T::zero(), T::lit(5.0)),
                (T::one(), T::lit(3.0)),
            ]),
        }
    }

    pub fn grid_intervals(&self) -> usize {
        self.m
    }

    /// Five-point negative Laplacian `L` (SPD).
    pub fn laplacian(&self) -> &DMatrix<T> {
        &self.laplacian
    }

    /// Unscaled forcing profile `g`.
    pub fn bump(&self) -> &DVector<T> {
        &self.bump
    }

    fn cell_area(&self) -> T {
        let h = T::one() / T::from_usize_lossy(self.m);
        h * h
    }
}

impl<T: Real> FomProblem<T> for NonlinearReaction<T> {
    fn name(&self) -> &'static str {
        "nonlinear_reaction"
    }

    fn dimension(&self) -> usize {
        self.bump.len()
    }

    fn parameter_box(&self) -> &ParameterBox<T> {
        &self.params
    }

    fn residual_kind(&self) -> ResidualKind {
        ResidualKind::Nonlinear
    }

    fn assemble_residual(&self, w: &DVector<T>, mu: &ParameterVector<T>) -> DVector<T> {
        let v = mu.values();
        let (mu1, mu2, mu3) = (v[0], v[1], v[2]);
        let mut r = &self.bump * mu3 - (&self.laplacian * w) * mu1;
        for (ri, &wi) in r.iter_mut().zip(w.iter()) {
            *ri -= mu2 * wi * wi * wi;
        }
        r
    }

    fn assemble_jacobian(&self, w: &DVector<T>, mu: &ParameterVector<T>) -> DMatrix<T> {
        let v = mu.values();
        let mut j = &self.laplacian * (-v[0]);
        let three = T::lit(3.0);
        for (i, &wi) in w.iter().enumerate() {
            j[(i, i)] -= three * v[1] * wi * wi;
        }
        j
    }

    fn metric_matrix(&self, kind: MetricKind) -> Result<DMatrix<T>> {
        let n = self.dimension();
        let area = self.cell_area();
        Ok(match kind {
            MetricKind::Identity => DMatrix::identity(n, n),
            MetricKind::DiscreteH1 => {
                DMatrix::identity(n, n) * area + &self.laplacian * area
            }
        })
    }

    fn qoi_functionals(&self) -> Vec<QoiFunctional<T>> {
        let n = self.dimension();
        let area = self.cell_area();
        vec![
            QoiFunctional::linear("integral", DVector::from_element(n, area)),
            QoiFunctional::quadratic("integral_sq", DMatrix::identity(n, n) * area)
                .expect("scaled identity is symmetric"),
        ]
    }
}
