//! Parameterized full-order problems `r(w; mu) = 0`, their QoI functionals,
//! the two built-in benchmarks and the full-order Newton solver.

mod affine;
mod diffusion;
mod reaction;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result, RomError};
use crate::linalg::DenseLu;
use crate::newton::{damped_newton, NewtonSystem};
use crate::scalar::Real;
use crate::subspaces::MetricKind;

pub use affine::AffineProblem;
pub use diffusion::LinearDiffusion;
pub use reaction::NonlinearReaction;

/// A point in the parameter domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent, bound = "")]
pub struct ParameterVector<T: Real> {
    values: Vec<T>,
}

impl<T: Real> ParameterVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.as_f64()).collect()
    }
}

impl<T: Real> From<Vec<T>> for ParameterVector<T> {
    fn from(values: Vec<T>) -> Self {
        Self::new(values)
    }
}

/// Axis-aligned box `D = [lo_1, hi_1] x ... x [lo_d, hi_d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBox<T: Real> {
    bounds: Vec<(T, T)>,
}

impl<T: Real> ParameterBox<T> {
    pub fn new(bounds: Vec<(T, T)>) -> Self {
        assert!(
            bounds.iter().all(|(lo, hi)| lo <= hi),
            "parameter box bounds must satisfy lo <= hi"
        );
        Self { bounds }
    }

    pub fn uniform(dim: usize, lo: T, hi: T) -> Self {
        Self::new(vec![(lo, hi); dim])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(T, T)] {
        &self.bounds
    }

    pub fn center(&self) -> ParameterVector<T> {
        let half = T::lit(0.5);
        ParameterVector::new(self.bounds.iter().map(|&(lo, hi)| (lo + hi) * half).collect())
    }

    /// Checks dimension and box membership of `mu`.
    pub fn validate(&self, mu: &ParameterVector<T>) -> Result<()> {
        check_len("parameter vector", self.dim(), mu.len())?;
        for (index, (&v, &(lo, hi))) in mu.values().iter().zip(&self.bounds).enumerate() {
            if !(v >= lo && v <= hi) {
                return Err(RomError::ParameterOutOfBox {
                    index,
                    value: v.as_f64(),
                    lo: lo.as_f64(),
                    hi: hi.as_f64(),
                });
            }
        }
        Ok(())
    }

    /// Draws one point uniformly from the box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterVector<T> {
        ParameterVector::new(
            self.bounds
                .iter()
                .map(|&(lo, hi)| {
                    let u: f64 = rng.random();
                    lo + (hi - lo) * T::lit(u)
                })
                .collect(),
        )
    }

    pub fn sample_many<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<ParameterVector<T>> {
        (0..count).map(|_| self.sample(rng)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    Linear,
    Nonlinear,
}

/// Full-order model `r: R^N x D -> R^N`.
///
/// Implementors provide unchecked assembly; the provided `residual` and
/// `jacobian` methods validate dimensions and parameter membership first.
pub trait FomProblem<T: Real>: Send + Sync {
    fn name(&self) -> &'static str;

    fn dimension(&self) -> usize;

    fn parameter_box(&self) -> &ParameterBox<T>;

    fn residual_kind(&self) -> ResidualKind;

    fn assemble_residual(&self, w: &DVector<T>, mu: &ParameterVector<T>) -> DVector<T>;

    fn assemble_jacobian(&self, w: &DVector<T>, mu: &ParameterVector<T>) -> DMatrix<T>;

    /// Inner-product matrix of the requested kind.
    fn metric_matrix(&self, kind: MetricKind) -> Result<DMatrix<T>> {
        match kind {
            MetricKind::Identity => Ok(DMatrix::identity(self.dimension(), self.dimension())),
            MetricKind::DiscreteH1 => Err(RomError::UnsupportedMetric {
                metric: "discrete_h1",
                problem: self.name(),
            }),
        }
    }

    /// Default quantities of interest shipped with the problem.
    fn qoi_functionals(&self) -> Vec<QoiFunctional<T>> {
        Vec::new()
    }

    fn parameter_dim(&self) -> usize {
        self.parameter_box().dim()
    }

    fn qoi_count(&self) -> usize {
        self.qoi_functionals().len()
    }

    fn residual(&self, w: &DVector<T>, mu: &ParameterVector<T>) -> Result<DVector<T>> {
        check_len("residual state", self.dimension(), w.len())?;
        self.parameter_box().validate(mu)?;
        Ok(self.assemble_residual(w, mu))
    }

    fn jacobian(&self, w: &DVector<T>, mu: &ParameterVector<T>) -> Result<DMatrix<T>> {
        check_len("jacobian state", self.dimension(), w.len())?;
        self.parameter_box().validate(mu)?;
        Ok(self.assemble_jacobian(w, mu))
    }
}

/// Converged (or not) full-order state.
#[derive(Debug, Clone)]
pub struct FomState<T: Real> {
    pub values: DVector<T>,
    pub converged: bool,
    pub newton_iters: usize,
    pub residual_norm: T,
}

/// Solves `r(u; mu) = 0` by damped Newton from `w0` (zero when `None`).
///
/// Linear problems converge after a single dense solve. Convergence means
/// `|r| <= tol * |r(w0)|`.
pub fn solve_fom<T: Real>(
    problem: &dyn FomProblem<T>,
    mu: &ParameterVector<T>,
    w0: Option<&DVector<T>>,
    tol: T,
    max_iters: usize,
) -> Result<FomState<T>> {
    if !(tol > T::zero()) || max_iters == 0 {
        return Err(RomError::Precondition(
            "solve_fom requires tol > 0 and max_iters >= 1".into(),
        ));
    }
    problem.parameter_box().validate(mu)?;
    let x0 = match w0 {
        Some(w) => {
            check_len("initial guess", problem.dimension(), w.len())?;
            w.clone()
        }
        None => DVector::zeros(problem.dimension()),
    };
    let system = FullNewton { problem, mu };
    let out = damped_newton(&system, x0, tol, max_iters)?;
    Ok(FomState {
        values: out.x,
        converged: out.converged,
        newton_iters: out.iterations,
        residual_norm: out.merit_norm,
    })
}

struct FullNewton<'a, T: Real> {
    problem: &'a dyn FomProblem<T>,
    mu: &'a ParameterVector<T>,
}

impl<T: Real> NewtonSystem<T> for FullNewton<'_, T> {
    fn merit_residual(&self, x: &DVector<T>) -> Result<DVector<T>> {
        Ok(self.problem.assemble_residual(x, self.mu))
    }

    fn stationarity(&self, _x: &DVector<T>, merit: &DVector<T>) -> Result<DVector<T>> {
        Ok(merit.clone())
    }

    fn direction(&self, x: &DVector<T>, r: &DVector<T>, iteration: usize) -> Result<(DVector<T>, T)> {
        let jac = self.problem.assemble_jacobian(x, self.mu);
        let lu = DenseLu::factor(jac, "full-order Newton", iteration)?;
        let dir = -lu.solve(r);
        Ok((dir, -r.norm_squared()))
    }
}

/// Functional `s(w)` of the state.
#[derive(Clone)]
pub enum QoiKind<T: Real> {
    /// `gamma^T w`
    Linear(DVector<T>),
    /// `w^T M w` with symmetric `M`
    Quadratic(DMatrix<T>),
    Custom(Arc<dyn Fn(&DVector<T>) -> T + Send + Sync>),
}

impl<T: Real> fmt::Debug for QoiKind<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QoiKind::Linear(g) => write!(f, "Linear(len={})", g.len()),
            QoiKind::Quadratic(m) => write!(f, "Quadratic({}x{})", m.nrows(), m.ncols()),
            QoiKind::Custom(_) => f.write_str("Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct QoiFunctional<T: Real> {
    pub kind: QoiKind<T>,
    pub label: String,
}

impl<T: Real> QoiFunctional<T> {
    pub fn linear(label: impl Into<String>, weights: DVector<T>) -> Self {
        Self {
            kind: QoiKind::Linear(weights),
            label: label.into(),
        }
    }

    /// Quadratic functional; rejects matrices that are not symmetric to 1e-12.
    pub fn quadratic(label: impl Into<String>, matrix: DMatrix<T>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(RomError::DimensionMismatch {
                context: "quadratic QoI matrix",
                expected: matrix.nrows(),
                actual: matrix.ncols(),
            });
        }
        let scale = matrix.amax().max(T::one());
        if crate::linalg::asymmetry(&matrix) > T::lit(1e-12) * scale {
            return Err(RomError::Precondition("quadratic QoI matrix is not symmetric".into()));
        }
        Ok(Self {
            kind: QoiKind::Quadratic(matrix),
            label: label.into(),
        })
    }

    pub fn custom(label: impl Into<String>, f: impl Fn(&DVector<T>) -> T + Send + Sync + 'static) -> Self {
        Self {
            kind: QoiKind::Custom(Arc::new(f)),
            label: label.into(),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.kind, QoiKind::Linear(_))
    }

    pub fn evaluate(&self, w: &DVector<T>) -> Result<T> {
        match &self.kind {
            QoiKind::Linear(g) => {
                check_len("linear QoI", g.len(), w.len())?;
                Ok(g.dot(w))
            }
            QoiKind::Quadratic(m) => {
                check_len("quadratic QoI", m.nrows(), w.len())?;
                Ok(w.dot(&(m * w)))
            }
            QoiKind::Custom(f) => Ok(f(w)),
        }
    }
}

/// Evaluates `functional` at `w`.
pub fn evaluate_qoi<T: Real>(functional: &QoiFunctional<T>, w: &DVector<T>) -> Result<T> {
    functional.evaluate(w)
}

/// Benchmark selector used by configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkKind {
    LinearDiffusion,
    NonlinearReaction,
}

impl BenchmarkKind {
    /// Builds the benchmark on an `m`-interval grid.
    pub fn build<T: Real>(self, m: usize) -> Box<dyn FomProblem<T>> {
        match self {
            BenchmarkKind::LinearDiffusion => Box::new(LinearDiffusion::new(m)),
            BenchmarkKind::NonlinearReaction => Box::new(NonlinearReaction::new(m)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_box_rejects_outside_points() {
        let b = ParameterBox::uniform(2, 0.0, 1.0);
        assert!(b.validate(&ParameterVector::new(vec![0.5, 1.0])).is_ok());
        assert!(matches!(
            b.validate(&ParameterVector::new(vec![0.5, 1.5])),
            Err(RomError::ParameterOutOfBox { index: 1, .. })
        ));
        assert!(matches!(
            b.validate(&ParameterVector::new(vec![0.5])),
            Err(RomError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn samples_stay_inside_box() {
        let b = ParameterBox::new(vec![(0.5, 2.0), (0.0, 5.0), (1.0, 3.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for mu in b.sample_many(200, &mut rng) {
            b.validate(&mu).unwrap();
        }
    }

    #[test]
    fn qoi_linear_unit_vector_picks_entry() {
        let w = DVector::from_vec(vec![3.0, -1.0, 2.5]);
        let mut g = DVector::zeros(3);
        g[0] = 1.0;
        let q = QoiFunctional::linear("first", g);
        assert_eq!(evaluate_qoi(&q, &w).unwrap(), 3.0);
    }

    #[test]
    fn qoi_quadratic_identity_is_squared_norm() {
        let w: DVector<f64> = DVector::from_vec(vec![3.0, -1.0, 2.5]);
        let q = QoiFunctional::quadratic("sq", DMatrix::identity(3, 3)).unwrap();
        assert!((evaluate_qoi(&q, &w).unwrap() - w.norm_squared()).abs() < 1e-14);
    }

    #[test]
    fn qoi_rejects_asymmetric_and_mismatched() {
        let mut m = DMatrix::<f64>::identity(2, 2);
        m[(0, 1)] = 1.0;
        assert!(QoiFunctional::quadratic("bad", m).is_err());
        let q = QoiFunctional::linear("g", DVector::<f64>::zeros(3));
        assert!(matches!(
            q.evaluate(&DVector::zeros(2)),
            Err(RomError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn solve_fom_rejects_bad_tolerance() {
        let p = AffineProblem::new(DMatrix::<f64>::identity(2, 2), DVector::zeros(2));
        let mu = p.parameter_box().center();
        assert!(solve_fom(&p, &mu, None, 0.0, 5).is_err());
        assert!(solve_fom(&p, &mu, None, 1e-8, 0).is_err());
    }

    #[test]
    fn singular_jacobian_reports_iteration() {
        let p = AffineProblem::new(DMatrix::<f64>::zeros(3, 3), DVector::from_element(3, 1.0));
        let mu = p.parameter_box().center();
        match solve_fom(&p, &mu, None, 1e-10, 5) {
            Err(RomError::SingularSystem { iteration, .. }) => assert_eq!(iteration, 1),
            other => panic!("expected singular system, got {other:?}"),
        }
    }
}
