//! Statistical validation metrics and relative state/QoI errors.

use std::time::Instant;

use nalgebra::DVector;

use super::{predict_state, FomSnapshots, OfflinePackage, StatisticalStateModel};
use crate::error::{check_len, Result, RomError};
use crate::gpr::{interval_half_width, ks_statistic, GpErrorModel};
use crate::problems::{solve_fom, FomProblem, ParameterVector, QoiFunctional};
use crate::scalar::Real;
use crate::subspaces::SubspaceSet;

/// Coverage levels reported per coordinate.
pub const VALIDATION_OMEGAS: [f64; 4] = [0.80, 0.90, 0.95, 0.99];

/// Fraction of variance unexplained, `sum (t - p)^2 / sum (t - mean t)^2`.
pub fn fvu<T: Real>(true_values: &[T], predicted_means: &[T]) -> Result<T> {
    check_len("FVU predictions", true_values.len(), predicted_means.len())?;
    if true_values.len() < 2 {
        return Err(RomError::DegenerateData("FVU needs at least two values"));
    }
    let n = T::from_usize_lossy(true_values.len());
    let mean = true_values.iter().fold(T::zero(), |a, &b| a + b) / n;
    let mut num = T::zero();
    let mut den = T::zero();
    for (&t, &p) in true_values.iter().zip(predicted_means) {
        num += (t - p) * (t - p);
        den += (t - mean) * (t - mean);
    }
    if den == T::zero() {
        return Err(RomError::DegenerateData("true values are all equal"));
    }
    Ok(num / den)
}

/// Fraction of `(feature, truth)` pairs whose truth lies in the model's
/// `omega`-prediction interval.
pub fn validation_frequency<T: Real>(model: &GpErrorModel<T>, features: &[T], truths: &[T], omega: T) -> Result<T> {
    check_len("validation truths", features.len(), truths.len())?;
    if features.is_empty() {
        return Err(RomError::Precondition("empty validation set".into()));
    }
    let mut inside = 0usize;
    for (&rho, &y) in features.iter().zip(truths) {
        let (mean, var) = model.posterior(rho);
        if (y - mean).abs() <= interval_half_width(var.sqrt(), omega)? {
            inside += 1;
        }
    }
    Ok(T::from_usize_lossy(inside) / T::from_usize_lossy(features.len()))
}

/// Relative Euclidean state errors at one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateErrors<T: Real> {
    /// ROM alone
    pub e_x: T,
    /// ROM + in-plane GP means
    pub e_x_par_tilde: T,
    /// ROM + exact in-plane error
    pub e_x_par: T,
    /// ROM + in-plane and out-of-plane GP means
    pub e_x_full_tilde: T,
    /// ROM + exact error coordinates on `Phi_bar`
    pub e_x_full: T,
}

/// Error quotients `|u - x| / |u|` for the ROM state and its corrections.
pub fn relative_state_errors<T: Real>(
    sub: &SubspaceSet<T>,
    fom_state: &DVector<T>,
    model: &StatisticalStateModel<T>,
) -> Result<StateErrors<T>> {
    let exact = sub.error_generalized_coordinates(fom_state, &model.rom_state)?;
    let denom = fom_state.norm();
    if denom == T::zero() {
        return Err(RomError::DegenerateData("zero FOM state"));
    }
    let rel = |x: &DVector<T>| (fom_state - x).norm() / denom;
    let x = &model.rom_state;
    Ok(StateErrors {
        e_x: rel(x),
        e_x_par_tilde: rel(&model.in_plane_mean(sub)),
        e_x_par: rel(&(x + sub.phi() * &exact.in_plane)),
        e_x_full_tilde: rel(&model.mean()),
        e_x_full: rel(&(x + sub.phi() * &exact.in_plane + sub.phi_perp() * &exact.out_of_plane)),
    })
}

/// Validation statistics of one coordinate model on the test set.
#[derive(Debug, Clone)]
pub struct CoordinateStats<T: Real> {
    /// `None` when the test responses have no spread.
    pub fvu: Option<T>,
    /// `(omega, nu_omega)` for [`VALIDATION_OMEGAS`]
    pub frequencies: Vec<(f64, T)>,
    pub ks: T,
}

/// Relative QoI errors with and without the ROMES correction.
#[derive(Debug, Clone)]
pub struct QoiErrors<T: Real> {
    pub label: String,
    pub e_q: T,
    pub e_q_tilde: T,
}

/// Per-test-point record.
#[derive(Debug, Clone)]
pub struct PointRecord<T: Real> {
    pub mu: ParameterVector<T>,
    pub indicators: DVector<T>,
    pub exact_coordinates: DVector<T>,
    pub means: DVector<T>,
    pub variances: DVector<T>,
    pub errors: StateErrors<T>,
    pub rom_newton_iters: usize,
    pub dual_factorizations: usize,
    pub rom_seconds: f64,
    pub online_seconds: f64,
}

/// Empirical means over the test set plus per-coordinate validation statistics.
#[derive(Debug, Clone)]
pub struct ErrorMetrics<T: Real> {
    pub e_x: T,
    pub e_x_par_tilde: T,
    pub e_x_par: T,
    pub e_x_full_tilde: T,
    pub e_x_full: T,
    pub qoi: Vec<QoiErrors<T>>,
    pub coordinates: Vec<CoordinateStats<T>>,
    pub points: Vec<PointRecord<T>>,
    /// Test points dropped because the FOM solve failed.
    pub excluded: usize,
}

fn check_disjoint<T: Real>(package: &OfflinePackage<T>, test: &[ParameterVector<T>]) -> Result<()> {
    let sets = [&package.sets.pod, &package.sets.dual, &package.sets.romes];
    for mu in test {
        if sets.iter().any(|s| s.contains(mu)) {
            return Err(RomError::Precondition(format!(
                "test parameter {:?} also appears in a training set",
                mu.to_f64()
            )));
        }
    }
    Ok(())
}

/// Solves the FOM at every test parameter (excluding failures) and evaluates
/// the package against it with the problem's own QoIs.
pub fn error_metrics<T: Real>(
    problem: &dyn FomProblem<T>,
    package: &OfflinePackage<T>,
    test_params: &[ParameterVector<T>],
) -> Result<ErrorMetrics<T>> {
    check_disjoint(package, test_params)?;
    let solver = package.config.solver;
    let mut kept = FomSnapshots {
        params: Vec::new(),
        states: Vec::new(),
        newton_iters: Vec::new(),
        seconds: Vec::new(),
    };
    let mut excluded = 0;
    for mu in test_params {
        let start = Instant::now();
        match solve_fom(problem, mu, None, T::lit(solver.tol), solver.max_iters) {
            Ok(s) if s.converged => {
                kept.seconds.push(start.elapsed().as_secs_f64());
                kept.params.push(mu.clone());
                kept.states.push(s.values);
                kept.newton_iters.push(s.newton_iters);
            }
            Ok(_) | Err(_) => excluded += 1,
        }
    }
    if excluded > 0 {
        log::warn!("{excluded} test points excluded after FOM failure");
    }
    let mut metrics = error_metrics_with(problem, package, &kept, &problem.qoi_functionals())?;
    metrics.excluded = excluded;
    Ok(metrics)
}

/// Evaluates the package against precomputed FOM test states.
pub fn error_metrics_with<T: Real>(
    problem: &dyn FomProblem<T>,
    package: &OfflinePackage<T>,
    test: &FomSnapshots<T>,
    functionals: &[QoiFunctional<T>],
) -> Result<ErrorMetrics<T>> {
    check_disjoint(package, &test.params)?;
    if test.is_empty() {
        return Err(RomError::Precondition("no usable test points".into()));
    }
    let sub = &package.subspaces;
    let config = &package.config;
    let mut points = Vec::with_capacity(test.len());
    let mut qoi_sums = vec![(T::zero(), T::zero()); functionals.len()];
    for (mu, u) in test.params.iter().zip(&test.states) {
        let start = Instant::now();
        let rom_only = crate::rom::solve_rom(problem, sub, mu, config.projection, T::lit(config.solver.tol), config.solver.max_iters)?;
        let rom_seconds = start.elapsed().as_secs_f64();
        let start = Instant::now();
        let (rom, rho, factorizations, model) = predict_state(problem, package, mu)?;
        let online_seconds = start.elapsed().as_secs_f64();
        debug_assert_eq!(rom_only.reconstructed, rom.reconstructed);
        let errors = relative_state_errors(sub, u, &model)?;
        for (j, f) in functionals.iter().enumerate() {
            let q = f.evaluate(u)?;
            let q_rom = f.evaluate(&rom.reconstructed)?;
            let q_tilde = match super::qoi_moments(f, sub, &model) {
                Some(m) => m.mean,
                None => f.evaluate(&model.mean())?,
            };
            let denom = q.abs();
            if denom == T::zero() {
                return Err(RomError::DegenerateData("zero reference QoI value"));
            }
            qoi_sums[j].0 += (q - q_rom).abs() / denom;
            qoi_sums[j].1 += (q - q_tilde).abs() / denom;
        }
        let exact = sub.error_generalized_coordinates(u, &rom.reconstructed)?.concatenated();
        points.push(PointRecord {
            mu: mu.clone(),
            indicators: rho,
            exact_coordinates: exact,
            means: model.coordinate_means.clone(),
            variances: model.coordinate_variances.clone(),
            errors,
            rom_newton_iters: rom.newton_iters,
            dual_factorizations: factorizations,
            rom_seconds,
            online_seconds,
        });
    }

    let count = T::from_usize_lossy(points.len());
    let avg = |f: &dyn Fn(&StateErrors<T>) -> T| points.iter().fold(T::zero(), |a, p| a + f(&p.errors)) / count;
    let mut coordinates = Vec::with_capacity(package.n_bar());
    for (i, model) in package.gp_models.iter().enumerate() {
        let rho: Vec<T> = points.iter().map(|p| p.indicators[i]).collect();
        let truth: Vec<T> = points.iter().map(|p| p.exact_coordinates[i]).collect();
        let means: Vec<T> = points.iter().map(|p| p.means[i]).collect();
        let standardized: Vec<T> = points
            .iter()
            .map(|p| (p.exact_coordinates[i] - p.means[i]) / p.variances[i].sqrt())
            .collect();
        let frequencies = VALIDATION_OMEGAS
            .iter()
            .map(|&w| Ok((w, validation_frequency(model, &rho, &truth, T::lit(w))?)))
            .collect::<Result<Vec<_>>>()?;
        coordinates.push(CoordinateStats {
            fvu: fvu(&truth, &means).ok(),
            frequencies,
            ks: ks_statistic(&standardized)?,
        });
    }
    Ok(ErrorMetrics {
        e_x: avg(&|e| e.e_x),
        e_x_par_tilde: avg(&|e| e.e_x_par_tilde),
        e_x_par: avg(&|e| e.e_x_par),
        e_x_full_tilde: avg(&|e| e.e_x_full_tilde),
        e_x_full: avg(&|e| e.e_x_full),
        qoi: functionals
            .iter()
            .zip(&qoi_sums)
            .map(|(f, &(a, b))| QoiErrors {
                label: f.label.clone(),
                e_q: a / count,
                e_q_tilde: b / count,
            })
            .collect(),
        coordinates,
        points,
        excluded: 0,
    })
}
