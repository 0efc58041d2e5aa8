//! Reduced primal solves by Galerkin or least-squares Petrov-Galerkin projection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};
use crate::linalg::DenseLu;
use crate::newton::{damped_newton, NewtonSystem};
use crate::problems::{FomProblem, ParameterVector, QoiFunctional};
use crate::scalar::Real;
use crate::subspaces::SubspaceSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// Test basis `Psi = Phi`.
    #[default]
    Galerkin,
    /// Test basis `Psi = (dr/dw) Phi`, solved by Gauss-Newton.
    Lspg,
}

#[derive(Debug, Clone)]
pub struct RomSolution<T: Real> {
    pub reduced_coords: DVector<T>,
    /// `x_ref + Phi * reduced_coords`
    pub reconstructed: DVector<T>,
    /// Euclidean norm of the full residual at `reconstructed`.
    pub residual_norm: T,
    pub converged: bool,
    pub newton_iters: usize,
}

/// Solves the reduced system from zero reduced coordinates.
///
/// Galerkin: Newton on `Phi^T r(x_ref + Phi x) = 0`. LSPG: Gauss-Newton on
/// `0.5 |r(x_ref + Phi x)|^2`. Both use the same backtracking line search as
/// the full-order solver; convergence is relative to the initial value of
/// `|Psi^T r|`.
pub fn solve_rom<T: Real>(
    problem: &dyn FomProblem<T>,
    sub: &SubspaceSet<T>,
    mu: &ParameterVector<T>,
    projection: Projection,
    tol: T,
    max_iters: usize,
) -> Result<RomSolution<T>> {
    if !(tol > T::zero()) || max_iters == 0 {
        return Err(RomError::Precondition(
            "solve_rom requires tol > 0 and max_iters >= 1".into(),
        ));
    }
    crate::error::check_len("subspace state dimension", problem.dimension(), sub.state_dim())?;
    problem.parameter_box().validate(mu)?;
    let x0 = DVector::zeros(sub.n());
    let outcome = match projection {
        Projection::Galerkin => damped_newton(&GalerkinSystem { problem, sub, mu }, x0, tol, max_iters)?,
        Projection::Lspg => damped_newton(&LspgSystem { problem, sub, mu }, x0, tol, max_iters)?,
    };
    let reconstructed = sub.reference_state() + sub.phi() * &outcome.x;
    let residual_norm = problem.assemble_residual(&reconstructed, mu).norm();
    Ok(RomSolution {
        reduced_coords: outcome.x,
        reconstructed,
        residual_norm,
        converged: outcome.converged,
        newton_iters: outcome.iterations,
    })
}

/// `s(x_ROM)`
pub fn rom_qoi<T: Real>(functional: &QoiFunctional<T>, solution: &RomSolution<T>) -> Result<T> {
    functional.evaluate(&solution.reconstructed)
}

struct GalerkinSystem<'a, T: Real> {
    problem: &'a dyn FomProblem<T>,
    sub: &'a SubspaceSet<T>,
    mu: &'a ParameterVector<T>,
}

impl<T: Real> GalerkinSystem<'_, T> {
    fn state(&self, x: &DVector<T>) -> DVector<T> {
        self.sub.reference_state() + self.sub.phi() * x
    }
}

impl<T: Real> NewtonSystem<T> for GalerkinSystem<'_, T> {
    fn merit_residual(&self, x: &DVector<T>) -> Result<DVector<T>> {
        let r = self.problem.assemble_residual(&self.state(x), self.mu);
        Ok(self.sub.phi().tr_mul(&r))
    }

    fn stationarity(&self, _x: &DVector<T>, merit: &DVector<T>) -> Result<DVector<T>> {
        Ok(merit.clone())
    }

    fn direction(&self, x: &DVector<T>, merit: &DVector<T>, iteration: usize) -> Result<(DVector<T>, T)> {
        let jac = self.problem.assemble_jacobian(&self.state(x), self.mu);
        let reduced: DMatrix<T> = self.sub.phi().tr_mul(&(jac * self.sub.phi()));
        let lu = DenseLu::factor(reduced, "Galerkin reduced Newton", iteration)?;
        Ok((-lu.solve(merit), -merit.norm_squared()))
    }
}

struct LspgSystem<'a, T: Real> {
    problem: &'a dyn FomProblem<T>,
    sub: &'a SubspaceSet<T>,
    mu: &'a ParameterVector<T>,
}

impl<T: Real> LspgSystem<'_, T> {
    fn state(&self, x: &DVector<T>) -> DVector<T> {
        self.sub.reference_state() + self.sub.phi() * x
    }

    fn test_basis(&self, x: &DVector<T>) -> DMatrix<T> {
        self.problem.assemble_jacobian(&self.state(x), self.mu) * self.sub.phi()
    }
}

impl<T: Real> NewtonSystem<T> for LspgSystem<'_, T> {
    fn merit_residual(&self, x: &DVector<T>) -> Result<DVector<T>> {
        Ok(self.problem.assemble_residual(&self.state(x), self.mu))
    }

    fn stationarity(&self, x: &DVector<T>, merit: &DVector<T>) -> Result<DVector<T>> {
        Ok(self.test_basis(x).tr_mul(merit))
    }

    fn direction(&self, x: &DVector<T>, merit: &DVector<T>, iteration: usize) -> Result<(DVector<T>, T)> {
        let psi = self.test_basis(x);
        let qr = psi.clone().qr();
        let r = qr.r();
        let max_diag = r.diagonal().amax();
        let n = r.nrows();
        let threshold = T::from_usize_lossy(psi.nrows()) * T::eps() * max_diag;
        if max_diag == T::zero() || r.diagonal().iter().any(|d| d.abs() <= threshold) {
            return Err(RomError::SingularSystem {
                context: "LSPG Gauss-Newton",
                iteration,
            });
        }
        let rhs = -qr.q().tr_mul(merit);
        let dir = r
            .solve_upper_triangular(&rhs)
            .ok_or(RomError::SingularSystem {
                context: "LSPG Gauss-Newton",
                iteration,
            })?;
        debug_assert_eq!(dir.len(), n);
        let slope = merit.dot(&(psi * &dir));
        Ok((dir, slope))
    }
}
