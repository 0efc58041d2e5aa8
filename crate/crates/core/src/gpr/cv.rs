//! K-fold cross-validation over a hyperparameter grid.
//!
//! Per fold and per length scale the unit kernel matrix is eigendecomposed
//! once, `K0 = Q diag(lambda) Q^T`; every `(gamma, sigma^2)` then reuses it
//! through `W^-1 = Q diag(1 / (gamma lambda + sigma^2)) Q^T`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{evaluate_loss, LossKind};
use super::{check_design, unit_kernel, GpErrorModel, GpHyperparameters};
use crate::error::{check_len, Result, RomError};
use crate::scalar::Real;

pub const DEFAULT_FOLDS: usize = 10;

/// Per-axis `[lo, hi]` multipliers of the response standard deviation `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBounds {
    pub noise: [f64; 2],
    pub signal: [f64; 2],
    pub length: [f64; 2],
}

impl Default for GridBounds {
    fn default() -> Self {
        Self {
            noise: [0.01, 0.25],
            signal: [0.1, 1.0],
            length: [0.001, 0.1],
        }
    }
}

impl GridBounds {
    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [("noise", self.noise), ("signal", self.signal), ("length", self.length)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(RomError::Precondition(format!(
                    "{name} grid bounds must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// [`scaled_grid`] with the default bounds:
/// `sigma^2 in [0.01, 0.25] s`, `gamma in [0.1, 1] s`, `l in [0.001, 0.1] s`.
pub fn default_grid<T: Real>(responses: &[T], points: usize) -> Result<Vec<GpHyperparameters<T>>> {
    scaled_grid(responses, points, &GridBounds::default())
}

/// Equispaced grid with `points` values per hyperparameter, each axis spanning
/// its bounds times `s`, the sample standard deviation of `responses`. Noise
/// varies slowest, length scale fastest.
pub fn scaled_grid<T: Real>(
    responses: &[T],
    points: usize,
    bounds: &GridBounds,
) -> Result<Vec<GpHyperparameters<T>>> {
    bounds.validate()?;
    if responses.len() < 2 {
        return Err(RomError::DegenerateData("need two responses for a standard deviation"));
    }
    if points == 0 {
        return Err(RomError::Precondition("grid needs at least one point per axis".into()));
    }
    let n = T::from_usize_lossy(responses.len());
    let mean = responses.iter().fold(T::zero(), |a, &b| a + b) / n;
    let var = responses
        .iter()
        .fold(T::zero(), |a, &b| a + (b - mean) * (b - mean))
        / (n - T::one());
    let s = var.sqrt();
    if !(s > T::zero()) || !s.is_finite() {
        return Err(RomError::DegenerateData("responses have zero spread"));
    }
    let axis = |[lo, hi]: [f64; 2]| -> Vec<T> {
        (0..points)
            .map(|k| {
                let t = if points == 1 { 0.0 } else { k as f64 / (points - 1) as f64 };
                T::lit(lo + (hi - lo) * t) * s
            })
            .collect()
    };
    let (noise, signal, length) = (axis(bounds.noise), axis(bounds.signal), axis(bounds.length));
    let mut grid = Vec::with_capacity(points.pow(3));
    for &sn in &noise {
        for &g in &signal {
            for &l in &length {
                grid.push(GpHyperparameters {
                    noise_variance: sn,
                    signal_variance: g,
                    length_scale: l,
                });
            }
        }
    }
    Ok(grid)
}

/// Selected model plus the mean fold loss of every grid point (`None` when
/// the point failed on some fold).
#[derive(Debug, Clone)]
pub struct CvReport<T: Real> {
    pub model: GpErrorModel<T>,
    pub selected: usize,
    pub losses: Vec<Option<T>>,
}

/// Selects hyperparameters by K-fold cross-validation and refits `beta` on all data.
pub fn cross_validate<T: Real>(
    features: &[T],
    responses: &[T],
    grid: &[GpHyperparameters<T>],
    folds: usize,
    kind: LossKind,
    seed: u64,
) -> Result<GpErrorModel<T>> {
    Ok(cross_validate_report(features, responses, grid, folds, kind, seed)?.model)
}

pub fn cross_validate_report<T: Real>(
    features: &[T],
    responses: &[T],
    grid: &[GpHyperparameters<T>],
    folds: usize,
    kind: LossKind,
    seed: u64,
) -> Result<CvReport<T>> {
    check_len("GP responses", features.len(), responses.len())?;
    kind.validate()?;
    if folds < 2 || grid.is_empty() || features.len() < folds {
        return Err(RomError::Precondition(format!(
            "cross-validation needs K >= 2, a nonempty grid and n_train >= K (K = {folds}, n = {})",
            features.len()
        )));
    }
    for h in grid {
        h.validate()?;
    }
    check_design(features)?;

    let assignment = fold_assignment(features.len(), folds, seed);
    let mut totals: Vec<Option<T>> = vec![Some(T::zero()); grid.len()];
    for fold in 0..folds {
        let (train, test): (Vec<usize>, Vec<usize>) =
            (0..features.len()).partition(|&k| assignment[k] != fold);
        let pick = |idx: &[usize], src: &[T]| idx.iter().map(|&k| src[k]).collect::<Vec<T>>();
        let data = FoldData {
            train_x: pick(&train, features),
            train_y: pick(&train, responses),
            test_x: pick(&test, features),
            test_y: pick(&test, responses),
        };
        let fold_losses = data.losses(grid, kind);
        for (total, loss) in totals.iter_mut().zip(fold_losses) {
            *total = match (*total, loss) {
                (Some(t), Some(l)) => Some(t + l),
                _ => None,
            };
        }
    }
    let k = T::from_usize_lossy(folds);
    let losses: Vec<Option<T>> = totals.into_iter().map(|t| t.map(|t| t / k)).collect();

    let mut selected = None;
    let mut best = T::zero();
    for (idx, loss) in losses.iter().enumerate() {
        if let Some(l) = *loss {
            if selected.is_none() || l < best {
                selected = Some(idx);
                best = l;
            }
        }
    }
    let selected = selected.ok_or(RomError::SelectionFailed)?;
    log::debug!("cross-validation selected grid point {selected} with loss {best}");
    let model = GpErrorModel::fit(features.to_vec(), responses.to_vec(), grid[selected])?;
    Ok(CvReport {
        model,
        selected,
        losses,
    })
}

/// Seeded shuffle, then round-robin into `folds` groups.
fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n];
    for (pos, &k) in order.iter().enumerate() {
        assignment[k] = pos % folds;
    }
    assignment
}

struct FoldData<T: Real> {
    train_x: Vec<T>,
    train_y: Vec<T>,
    test_x: Vec<T>,
    test_y: Vec<T>,
}

/// Eigen-coordinates of one fold for a fixed length scale.
struct SpectralFold<T: Real> {
    lambda: Vec<T>,
    /// `Q^T 1`, `Q^T rho`, `Q^T y`
    q1: DVector<T>,
    qx: DVector<T>,
    qy: DVector<T>,
    /// `K0(test, train) Q`
    cross: DMatrix<T>,
}

impl<T: Real> FoldData<T> {
    fn losses(&self, grid: &[GpHyperparameters<T>], kind: LossKind) -> Vec<Option<T>> {
        let mut out = vec![None; grid.len()];
        if check_design(&self.train_x).is_err() {
            return out;
        }
        let mut done = vec![false; grid.len()];
        for start in 0..grid.len() {
            if done[start] {
                continue;
            }
            let ell = grid[start].length_scale;
            let spectral = self.spectral(ell);
            for idx in start..grid.len() {
                if done[idx] || grid[idx].length_scale != ell {
                    continue;
                }
                done[idx] = true;
                out[idx] = spectral
                    .predict(&grid[idx], &self.test_x)
                    .and_then(|pred| evaluate_loss(kind, &pred, &self.test_y).ok())
                    .filter(|l| l.is_finite());
            }
        }
        out
    }

    fn spectral(&self, ell: T) -> SpectralFold<T> {
        let k0 = unit_kernel(&self.train_x, &self.train_x, ell);
        let eig = SymmetricEigen::new(k0);
        let q = eig.eigenvectors;
        let lambda = eig.eigenvalues.iter().map(|&l| l.max(T::zero())).collect();
        let n = self.train_x.len();
        let ones = DVector::from_element(n, T::one());
        let x = DVector::from_column_slice(&self.train_x);
        let y = DVector::from_column_slice(&self.train_y);
        let cross = unit_kernel(&self.test_x, &self.train_x, ell) * &q;
        SpectralFold {
            lambda,
            q1: q.tr_mul(&ones),
            qx: q.tr_mul(&x),
            qy: q.tr_mul(&y),
            cross,
        }
    }
}

impl<T: Real> SpectralFold<T> {
    /// Posterior `(mean, variance)` at `test_x`; `None` on a degenerate solve.
    fn predict(&self, hyper: &GpHyperparameters<T>, test_x: &[T]) -> Option<Vec<(T, T)>> {
        let g = hyper.signal_variance;
        let s2 = hyper.noise_variance;
        let d: Vec<T> = self.lambda.iter().map(|&l| T::one() / (g * l + s2)).collect();
        if d.iter().any(|v| !v.is_finite() || *v <= T::zero()) {
            return None;
        }
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
        for k in 0..d.len() {
            let (u, v, w) = (self.q1[k], self.qx[k], self.qy[k]);
            a11 += d[k] * u * u;
            a12 += d[k] * u * v;
            a22 += d[k] * v * v;
            b1 += d[k] * u * w;
            b2 += d[k] * v * w;
        }
        let det = a11 * a22 - a12 * a12;
        if !(det.abs() > T::lit(1e3) * T::eps() * (a11 * a22).abs()) {
            return None;
        }
        let beta0 = (a22 * b1 - a12 * b2) / det;
        let beta1 = (a11 * b2 - a12 * b1) / det;
        // W^-1 (y - H beta) in eigen-coordinates
        let alpha: Vec<T> = (0..d.len())
            .map(|k| d[k] * (self.qy[k] - beta0 * self.q1[k] - beta1 * self.qx[k]))
            .collect();
        let mut out = Vec::with_capacity(test_x.len());
        for (j, &rho) in test_x.iter().enumerate() {
            let row = self.cross.row(j);
            let mut smooth = T::zero();
            let mut explained = T::zero();
            for k in 0..d.len() {
                smooth += row[k] * alpha[k];
                explained += row[k] * row[k] * d[k];
            }
            let mean = g * smooth + beta0 + beta1 * rho;
            let var = (g - g * g * explained).max(T::zero()) + s2;
            out.push((mean, var));
        }
        Some(out)
    }
}

#[cfg(test)]
pub(super) fn direct_fold_losses<T: Real>(
    features: &[T],
    responses: &[T],
    grid: &[GpHyperparameters<T>],
    folds: usize,
    kind: LossKind,
    seed: u64,
) -> Vec<Option<T>> {
    let assignment = fold_assignment(features.len(), folds, seed);
    grid.iter()
        .map(|h| {
            let mut total = T::zero();
            for fold in 0..folds {
                let (train, test): (Vec<usize>, Vec<usize>) =
                    (0..features.len()).partition(|&k| assignment[k] != fold);
                let pick = |idx: &[usize], src: &[T]| idx.iter().map(|&k| src[k]).collect::<Vec<T>>();
                let model = GpErrorModel::fit(pick(&train, features), pick(&train, responses), *h).ok()?;
                let pred = model.posterior_many(&pick(&test, features));
                total += evaluate_loss(kind, &pred, &pick(&test, responses)).ok()?;
            }
            Some(total / T::from_usize_lossy(folds))
        })
        .collect()
}
