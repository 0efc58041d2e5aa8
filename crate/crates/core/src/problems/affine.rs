use nalgebra::{DMatrix, DVector};

use super::{FomProblem, ParameterBox, ParameterVector, ResidualKind};
use crate::scalar::Real;

/// Parameter-independent affine system `r(w) = b - A w`.
///
/// Carries a dummy one-dimensional parameter box `[0, 1]`.
#[derive(Debug, Clone)]
pub struct AffineProblem<T: Real> {
    matrix: DMatrix<T>,
    rhs: DVector<T>,
    params: ParameterBox<T>,
}

impl<T: Real> AffineProblem<T> {
    pub fn new(matrix: DMatrix<T>, rhs: DVector<T>) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols(), "system matrix must be square");
        assert_eq!(matrix.nrows(), rhs.len(), "rhs length must match matrix");
        Self {
            matrix,
            rhs,
            params: ParameterBox::uniform(1, T::zero(), T::one()),
        }
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn rhs(&self) -> &DVector<T> {
        &self.rhs
    }
}

impl<T: Real> FomProblem<T> for AffineProblem<T> {
    fn name(&self) -> &'static str {
        "affine"
    }

    fn dimension(&self) -> usize {
        self.rhs.len()
    }

    fn parameter_box(&self) -> &ParameterBox<T> {
        &self.params
    }

    fn residual_kind(&self) -> ResidualKind {
        ResidualKind::Linear
    }

    fn assemble_residual(&self, w: &DVector<T>, _mu: &ParameterVector<T>) -> DVector<T> {
        &self.rhs - &self.matrix * w
    }

    fn assemble_jacobian(&self, _w: &DVector<T>, _mu: &ParameterVector<T>) -> DMatrix<T> {
        -&self.matrix
    }
}
