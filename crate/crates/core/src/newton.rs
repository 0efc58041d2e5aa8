//! Damped Newton iteration with backtracking (Armijo) line search.
//!
//! The same driver serves the full-order Newton solve, the Galerkin reduced
//! Newton solve and the LSPG Gauss-Newton solve; each supplies its own
//! merit residual and search direction through [`NewtonSystem`].

use nalgebra::DVector;

use crate::error::Result;
use crate::scalar::Real;

pub(crate) const ARMIJO_CONSTANT: f64 = 1e-4;
pub(crate) const MAX_HALVINGS: usize = 30;

pub(crate) trait NewtonSystem<T: Real> {
    /// Residual whose squared norm is the line-search merit.
    fn merit_residual(&self, x: &DVector<T>) -> Result<DVector<T>>;

    /// Vector whose norm measures convergence.
    fn stationarity(&self, x: &DVector<T>, merit: &DVector<T>) -> Result<DVector<T>>;

    /// Search direction and the directional derivative of `0.5 * |merit|^2` along it.
    fn direction(
        &self,
        x: &DVector<T>,
        merit: &DVector<T>,
        iteration: usize,
    ) -> Result<(DVector<T>, T)>;
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonOutcome<T: Real> {
    pub x: DVector<T>,
    pub merit_norm: T,
    pub converged: bool,
    pub iterations: usize,
}

/// Iterates until `|stationarity| <= tol * |stationarity(x0)|`.
pub(crate) fn damped_newton<T: Real, S: NewtonSystem<T>>(
    system: &S,
    x0: DVector<T>,
    tol: T,
    max_iters: usize,
) -> Result<NewtonOutcome<T>> {
    let c = T::lit(ARMIJO_CONSTANT);
    let half = T::lit(0.5);
    let mut x = x0;
    let mut merit = system.merit_residual(&x)?;
    let s0 = system.stationarity(&x, &merit)?.norm();
    if s0 == T::zero() {
        return Ok(NewtonOutcome {
            merit_norm: merit.norm(),
            x,
            converged: true,
            iterations: 0,
        });
    }
    let target = tol * s0;

    for k in 1..=max_iters {
        let (dir, slope) = system.direction(&x, &merit, k)?;
        let f = half * merit.norm_squared();
        let mut alpha = T::one();
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = &x + &dir * alpha;
            let trial_merit = system.merit_residual(&trial)?;
            let ft = half * trial_merit.norm_squared();
            if ft.is_finite() && ft <= f + c * alpha * slope {
                accepted = Some((trial, trial_merit));
                break;
            }
            alpha *= half;
        }
        let Some((next, next_merit)) = accepted else {
            log::debug!("line search stalled at iteration {k}");
            return Ok(NewtonOutcome {
                merit_norm: merit.norm(),
                x,
                converged: false,
                iterations: k,
            });
        };
        x = next;
        merit = next_merit;
        if system.stationarity(&x, &merit)?.norm() <= target {
            return Ok(NewtonOutcome {
                merit_norm: merit.norm(),
                x,
                converged: true,
                iterations: k,
            });
        }
    }
    Ok(NewtonOutcome {
        merit_norm: merit.norm(),
        x,
        converged: false,
        iterations: max_iters,
    })
}
