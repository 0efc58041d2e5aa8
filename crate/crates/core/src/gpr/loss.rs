//! Cross-validation losses and the Gaussian helpers they need.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result, RomError};
use crate::scalar::Real;

/// Coverage levels summed by [`LossKind::Combined`].
pub const COMBINED_OMEGAS: [f64; 4] = [0.80, 0.90, 0.95, 0.99];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LossKind {
    LogLikelihood,
    Interval { omega: f64 },
    Combined,
    Ks,
}

impl LossKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LossKind::Interval { omega } if !(omega > 0.0 && omega < 1.0) => Err(
                RomError::Precondition(format!("interval loss needs omega in (0, 1), got {omega}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            LossKind::LogLikelihood => "log_likelihood".into(),
            LossKind::Interval { omega } => format!("interval_{omega:.2}"),
            LossKind::Combined => "combined".into(),
            LossKind::Ks => "ks".into(),
        }
    }
}

pub fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Inverse error function on `(-1, 1)`: rational initial guess polished by
/// Newton steps, on `erfc` in the tails to avoid cancellation near `|y| = 1`.
pub fn erf_inv(y: f64) -> f64 {
    use statrs::function::erf::{erf, erfc};
    if y <= -1.0 {
        return f64::NEG_INFINITY;
    }
    if y >= 1.0 {
        return f64::INFINITY;
    }
    if y == 0.0 {
        return 0.0;
    }
    if y < 0.0 {
        return -erf_inv(-y);
    }
    let mut x = statrs::function::erf::erf_inv(y);
    let tail = 1.0 - y;
    for _ in 0..6 {
        let deriv = std::f64::consts::FRAC_2_SQRT_PI * (-x * x).exp();
        let err = if y > 0.5 { tail - erfc(x) } else { erf(x) - y };
        if deriv == 0.0 || err == 0.0 {
            break;
        }
        x -= err / deriv;
    }
    x
}

/// `sqrt(2) * std * erf^-1(omega)`
pub fn interval_half_width<T: Real>(std: T, omega: T) -> Result<T> {
    let w = omega.as_f64();
    if !(w > 0.0 && w < 1.0) {
        return Err(RomError::Precondition(format!("omega must lie in (0, 1), got {w}")));
    }
    Ok(std * T::lit(std::f64::consts::SQRT_2 * erf_inv(w)))
}

/// `sup |F_emp - Phi|` over the sorted sample, checking both sides of each step.
pub fn ks_statistic<T: Real>(standardized: &[T]) -> Result<T> {
    if standardized.is_empty() {
        return Err(RomError::Precondition("KS statistic needs at least one value".into()));
    }
    let mut z: Vec<f64> = standardized.iter().map(|v| v.as_f64()).collect();
    if z.iter().any(|v| v.is_nan()) {
        return Err(RomError::NumericalGuard("NaN in standardized residuals"));
    }
    z.sort_by(|a, b| a.partial_cmp(b).expect("NaN filtered above"));
    let m = z.len() as f64;
    let mut worst: f64 = 0.0;
    for (k, &zi) in z.iter().enumerate() {
        let f = standard_normal_cdf(zi);
        let above = (k + 1) as f64 / m;
        let below = k as f64 / m;
        worst = worst.max((above - f).abs()).max((below - f).abs());
    }
    Ok(T::lit(worst))
}

/// Loss of one validation fold given predicted `(mean, variance)` per point.
pub fn evaluate_loss<T: Real>(kind: LossKind, predictions: &[(T, T)], observed: &[T]) -> Result<T> {
    check_len("fold observations", predictions.len(), observed.len())?;
    if predictions.is_empty() {
        return Err(RomError::Precondition("empty validation fold".into()));
    }
    kind.validate()?;
    if predictions.iter().any(|&(_, v)| !(v > T::zero()) || !v.is_finite()) {
        return Err(RomError::NumericalGuard("non-positive predicted variance"));
    }
    let coverage = |omega: f64| -> T {
        let factor = std::f64::consts::SQRT_2 * erf_inv(omega);
        let inside = predictions
            .iter()
            .zip(observed)
            .filter(|&(&(m, v), &y)| (y - m).abs() <= T::lit(factor) * v.sqrt())
            .count();
        T::from_usize_lossy(inside) / T::from_usize_lossy(observed.len())
    };
    match kind {
        LossKind::LogLikelihood => {
            let count = T::from_usize_lossy(observed.len());
            let half = T::lit(0.5);
            let mut total = half * count * T::two_pi().ln();
            for (&(m, v), &y) in predictions.iter().zip(observed) {
                total += half * v.ln() + half * (y - m) * (y - m) / v;
            }
            Ok(total)
        }
        LossKind::Interval { omega } => {
            let d = T::lit(omega) - coverage(omega);
            Ok(d * d)
        }
        LossKind::Combined => Ok(COMBINED_OMEGAS.iter().fold(T::zero(), |acc, &w| {
            let d = T::lit(w) - coverage(w);
            acc + d * d
        })),
        LossKind::Ks => {
            let z: Vec<T> = predictions
                .iter()
                .zip(observed)
                .map(|(&(m, v), &y)| (y - m) / v.sqrt())
                .collect();
            ks_statistic(&z)
        }
    }
}
