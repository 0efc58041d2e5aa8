//! Univariate Gaussian-process regression with prior mean `beta_1 + beta_2 rho`,
//! squared-exponential kernel, GLS/MLE coefficients and cross-validated
//! hyperparameters.

mod cv;
mod loss;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result, RomError};
use crate::scalar::Real;

pub use cv::{
    cross_validate, cross_validate_report, default_grid, scaled_grid, CvReport, GridBounds, DEFAULT_FOLDS,
};
pub use loss::{
    erf_inv, evaluate_loss, interval_half_width, ks_statistic, standard_normal_cdf, LossKind,
    COMBINED_OMEGAS,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GpHyperparameters<T: Real> {
    /// `sigma^2`
    pub noise_variance: T,
    /// `gamma`
    pub signal_variance: T,
    /// `l`; the kernel divides the squared distance by `2 l`.
    pub length_scale: T,
}

impl<T: Real> GpHyperparameters<T> {
    pub fn new(noise_variance: T, signal_variance: T, length_scale: T) -> Result<Self> {
        let h = Self {
            noise_variance,
            signal_variance,
            length_scale,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: T| v > T::zero() && v.is_finite();
        if ok(self.noise_variance) && ok(self.signal_variance) && ok(self.length_scale) {
            Ok(())
        } else {
            Err(RomError::Precondition(format!(
                "GP hyperparameters must be positive and finite: {self:?}"
            )))
        }
    }
}

/// `K_ij = gamma * exp(-(a_i - b_j)^2 / (2 l))`
pub fn kernel_matrix<T: Real>(a: &[T], b: &[T], hyper: &GpHyperparameters<T>) -> DMatrix<T> {
    let scale = T::lit(-0.5) / hyper.length_scale;
    DMatrix::from_fn(a.len(), b.len(), |i, j| {
        let d = a[i] - b[j];
        hyper.signal_variance * (scale * d * d).exp()
    })
}

/// Unit-variance kernel matrix, `kernel_matrix / gamma`.
pub(crate) fn unit_kernel<T: Real>(a: &[T], b: &[T], length_scale: T) -> DMatrix<T> {
    let scale = T::lit(-0.5) / length_scale;
    DMatrix::from_fn(a.len(), b.len(), |i, j| {
        let d = a[i] - b[j];
        (scale * d * d).exp()
    })
}

/// Cholesky of `K + sigma^2 I`, retrying once with jitter `1e-10 * trace / n`.
fn factor_covariance<T: Real>(features: &[T], hyper: &GpHyperparameters<T>) -> Result<Cholesky<T, Dyn>> {
    let n = features.len();
    let mut w = kernel_matrix(features, features, hyper);
    for i in 0..n {
        w[(i, i)] += hyper.noise_variance;
    }
    if let Some(c) = Cholesky::new(w.clone()) {
        return Ok(c);
    }
    let jitter = T::lit(1e-10) * w.trace() / T::from_usize_lossy(n.max(1));
    for i in 0..n {
        w[(i, i)] += jitter;
    }
    Cholesky::new(w).ok_or(RomError::NotSpd("GP covariance K + sigma^2 I"))
}


/// Design matrix `[1 rho]` must have full column rank and at least three rows.
fn check_design<T: Real>(features: &[T]) -> Result<()> {
    if features.len() < 3 {
        return Err(RomError::DegenerateDesign("fewer than three training points"));
    }
    let lo = features.iter().cloned().fold(features[0], |a, b| a.min(b));
    let hi = features.iter().cloned().fold(features[0], |a, b| a.max(b));
    let scale = lo.abs().max(hi.abs());
    if !(hi - lo > T::eps() * T::lit(16.0) * scale) {
        return Err(RomError::DegenerateDesign("all features are equal"));
    }
    Ok(())
}

fn gls_beta<T: Real>(chol: &Cholesky<T, Dyn>, features: &[T], responses: &DVector<T>) -> Result<Vector2<T>> {
    let n = features.len();
    let h = DMatrix::from_fn(n, 2, |i, j| if j == 0 { T::one() } else { features[i] });
    let winv_h = chol.solve(&h);
    let a = h.tr_mul(&winv_h);
    let rhs = winv_h.tr_mul(responses);
    let a = Matrix2::new(a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    let det = a.determinant();
    let scale = a[(0, 0)] * a[(1, 1)];
    if !(det.abs() > T::lit(1e3) * T::eps() * scale.abs()) {
        return Err(RomError::DegenerateDesign("H^T W^-1 H is singular"));
    }
    let inv = a
        .try_inverse()
        .ok_or(RomError::DegenerateDesign("H^T W^-1 H is singular"))?;
    Ok(inv * Vector2::new(rhs[0], rhs[1]))
}

/// `beta = (H^T W^-1 H)^-1 H^T W^-1 y`, `W = K + sigma^2 I`, `H = [1 rho]`.
pub fn fit_beta_mle<T: Real>(features: &[T], responses: &[T], hyper: &GpHyperparameters<T>) -> Result<[T; 2]> {
    check_len("GP responses", features.len(), responses.len())?;
    hyper.validate()?;
    check_design(features)?;
    let chol = factor_covariance(features, hyper)?;
    let b = gls_beta(&chol, features, &DVector::from_column_slice(responses))?;
    Ok([b[0], b[1]])
}

/// Fitted GP for one error generalized coordinate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "", try_from = "GpModelRecord<T>", into = "GpModelRecord<T>")]
pub struct GpErrorModel<T: Real> {
    hyper: GpHyperparameters<T>,
    beta: [T; 2],
    features: Vec<T>,
    responses: Vec<T>,
    chol: Cholesky<T, Dyn>,
    /// `W^-1 (y - H beta)`
    alpha: DVector<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "")]
struct GpModelRecord<T: Real> {
    hyper: GpHyperparameters<T>,
    beta: [T; 2],
    train_features: Vec<T>,
    train_responses: Vec<T>,
}

impl<T: Real> From<GpErrorModel<T>> for GpModelRecord<T> {
    fn from(m: GpErrorModel<T>) -> Self {
        Self {
            hyper: m.hyper,
            beta: m.beta,
            train_features: m.features,
            train_responses: m.responses,
        }
    }
}

impl<T: Real> TryFrom<GpModelRecord<T>> for GpErrorModel<T> {
    type Error = RomError;

    fn try_from(r: GpModelRecord<T>) -> Result<Self> {
        GpErrorModel::with_beta(r.train_features, r.train_responses, r.hyper, r.beta)
    }
}

impl<T: Real> GpErrorModel<T> {
    /// Fits `beta` by MLE on all data.
    pub fn fit(features: Vec<T>, responses: Vec<T>, hyper: GpHyperparameters<T>) -> Result<Self> {
        check_len("GP responses", features.len(), responses.len())?;
        hyper.validate()?;
        check_design(&features)?;
        let chol = factor_covariance(&features, &hyper)?;
        let b = gls_beta(&chol, &features, &DVector::from_column_slice(&responses))?;
        Ok(Self::assemble(features, responses, hyper, [b[0], b[1]], chol))
    }

    /// Uses the given coefficients instead of refitting them.
    pub fn with_beta(features: Vec<T>, responses: Vec<T>, hyper: GpHyperparameters<T>, beta: [T; 2]) -> Result<Self> {
        check_len("GP responses", features.len(), responses.len())?;
        hyper.validate()?;
        if features.is_empty() {
            return Err(RomError::DegenerateDesign("no training points"));
        }
        let chol = factor_covariance(&features, &hyper)?;
        Ok(Self::assemble(features, responses, hyper, beta, chol))
    }

    fn assemble(features: Vec<T>, responses: Vec<T>, hyper: GpHyperparameters<T>, beta: [T; 2], chol: Cholesky<T, Dyn>) -> Self {
        let resid = DVector::from_iterator(
            features.len(),
            features
                .iter()
                .zip(&responses)
                .map(|(&x, &y)| y - beta[0] - beta[1] * x),
        );
        let alpha = chol.solve(&resid);
        Self {
            hyper,
            beta,
            features,
            responses,
            chol,
            alpha,
        }
    }

    pub fn hyper(&self) -> &GpHyperparameters<T> {
        &self.hyper
    }

    pub fn beta(&self) -> [T; 2] {
        self.beta
    }

    pub fn train_features(&self) -> &[T] {
        &self.features
    }

    pub fn train_responses(&self) -> &[T] {
        &self.responses
    }

    /// Posterior `(mean, variance)` of the response at feature `rho`.
    pub fn posterior(&self, rho: T) -> (T, T) {
        let k = unit_kernel(&[rho], &self.features, self.hyper.length_scale).transpose()
            * self.hyper.signal_variance;
        let mean = k.dot(&self.alpha) + self.beta[0] + self.beta[1] * rho;
        let v = self
            .chol
            .l()
            .solve_lower_triangular(&k)
            .expect("Cholesky factor has a positive diagonal");
        let explained = (self.hyper.signal_variance - v.norm_squared()).max(T::zero());
        (mean, explained + self.hyper.noise_variance)
    }

    pub fn posterior_many(&self, rhos: &[T]) -> Vec<(T, T)> {
        rhos.iter().map(|&r| self.posterior(r)).collect()
    }

    /// Symmetric `omega`-prediction interval `mean +- sqrt(2) std erf^-1(omega)`.
    pub fn prediction_interval(&self, rho: T, omega: T) -> Result<(T, T)> {
        let (mean, var) = self.posterior(rho);
        let half = interval_half_width(var.sqrt(), omega)?;
        Ok((mean - half, mean + half))
    }
}

/// Free-function form of [`GpErrorModel::posterior`].
pub fn posterior<T: Real>(model: &GpErrorModel<T>, rho: T) -> (T, T) {
    model.posterior(rho)
}

/// Free-function form of [`GpErrorModel::prediction_interval`].
pub fn prediction_interval<T: Real>(model: &GpErrorModel<T>, rho: T, omega: T) -> Result<(T, T)> {
    model.prediction_interval(rho, omega)
}
