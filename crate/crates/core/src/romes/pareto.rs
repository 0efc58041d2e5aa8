//! Accuracy/cost study comparing the ROM alone against ROMES corrections.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::error_metrics_with;
use super::{offline_train_from, FomSnapshots, OfflineInputs, RomesConfig};
use crate::duals::DualMode;
use crate::error::{Result, RomError};
use crate::problems::FomProblem;
use crate::rom::solve_rom;
use crate::scalar::Real;
use crate::subspaces::{build_metric, SubspaceSet};

/// Platform-independent flop counts of the online solves.
///
/// A dense factorization of a `k x k` system costs `2/3 k^3` and each pair of
/// triangular solves `2 k^2`. Primal costs scale with Newton iterations;
/// dual problems are linear, so they need one factorization per basis and one
/// back-substitution per coordinate.
#[derive(Debug, Clone, Copy, Default)]
pub struct CostModel;

impl CostModel {
    pub fn dense_solve(k: usize) -> f64 {
        let k = k as f64;
        2.0 / 3.0 * k * k * k + 2.0 * k * k
    }

    pub fn fom(state_dim: usize, newton_iters: usize) -> f64 {
        newton_iters as f64 * Self::dense_solve(state_dim)
    }

    pub fn rom(n: usize, newton_iters: usize) -> f64 {
        newton_iters as f64 * Self::dense_solve(n)
    }

    pub fn dual(n_p: usize, n_bar: usize, mode: DualMode) -> f64 {
        let k = n_p as f64;
        let factor = 2.0 / 3.0 * k * k * k;
        let back = 2.0 * k * k;
        match mode {
            DualMode::Shared => factor + n_bar as f64 * back,
            DualMode::Unique => n_bar as f64 * (factor + back),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParetoMethod {
    RomOnly,
    RomesInplane,
    RomesFull,
}

impl ParetoMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ParetoMethod::RomOnly => "rom_only",
            ParetoMethod::RomesInplane => "romes_inplane",
            ParetoMethod::RomesFull => "romes_full",
        }
    }
}

/// One grid configuration. `n_p` and `n_perp` are ignored for `rom_only`;
/// `n_perp` is ignored for `romes_inplane`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParetoPoint {
    pub method: ParetoMethod,
    pub n: usize,
    #[serde(default)]
    pub n_perp: usize,
    #[serde(default)]
    pub n_p: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoRecord {
    pub method: ParetoMethod,
    pub n: usize,
    pub n_perp: usize,
    /// `None` for `rom_only`.
    pub n_p: Option<usize>,
    pub relative_error: f64,
    /// Operation-count cost relative to the FOM.
    pub relative_cost: f64,
    /// Mean online wall time relative to the mean FOM solve time.
    pub relative_wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct ParetoStudy {
    pub records: Vec<ParetoRecord>,
    /// Indices into `records` of the non-dominated points of each method.
    pub fronts: BTreeMap<ParetoMethod, Vec<usize>>,
}

/// Indices of the points not dominated in both coordinates (lower is better).
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            let (ei, ci) = points[i];
            !points.iter().any(|&(e, c)| e <= ei && c <= ci && (e < ei || c < ci))
        })
        .collect()
}

/// Trains one package per distinct `(n, n_perp, n_p)` (sharing `inputs`) and
/// evaluates every grid point on the `test` states.
pub fn pareto_study<T: Real>(
    problem: &dyn FomProblem<T>,
    base: &RomesConfig,
    grid: &[ParetoPoint],
    inputs: &OfflineInputs<T>,
    test: &FomSnapshots<T>,
) -> Result<ParetoStudy> {
    if test.is_empty() {
        return Err(RomError::Precondition("Pareto study needs test states".into()));
    }
    let count = test.len() as f64;
    let fom_ops = test
        .newton_iters
        .iter()
        .map(|&k| CostModel::fom(problem.dimension(), k))
        .sum::<f64>()
        / count;
    let fom_seconds = (test.seconds.iter().sum::<f64>() / count).max(f64::MIN_POSITIVE);
    let mut records = Vec::with_capacity(grid.len());
    for point in grid {
        let record = match point.method {
            ParetoMethod::RomOnly => rom_only(problem, base, point.n, inputs, test, fom_ops, fom_seconds)?,
            method => {
                let n_p = point.n_p.ok_or_else(|| {
                    RomError::Precondition(format!("{} grid point needs n_p", method.as_str()))
                })?;
                let n_perp = if method == ParetoMethod::RomesFull { point.n_perp } else { 0 };
                let mut config = base.clone();
                config.n = point.n;
                config.n_perp = n_perp;
                config.n_p = n_p;
                let package = offline_train_from(problem, &config, inputs)?;
                let metrics = error_metrics_with(problem, &package, test, &[])?;
                let ops = metrics
                    .points
                    .iter()
                    .map(|p| {
                        CostModel::rom(point.n, p.rom_newton_iters)
                            + CostModel::dual(n_p, package.n_bar(), config.dual_mode)
                    })
                    .sum::<f64>()
                    / count;
                let seconds = metrics.points.iter().map(|p| p.online_seconds).sum::<f64>() / count;
                let relative_error = match method {
                    ParetoMethod::RomesInplane => metrics.e_x_par_tilde,
                    _ => metrics.e_x_full_tilde,
                };
                ParetoRecord {
                    method,
                    n: point.n,
                    n_perp,
                    n_p: Some(n_p),
                    relative_error: relative_error.as_f64(),
                    relative_cost: ops / fom_ops,
                    relative_wall_time: seconds / fom_seconds,
                }
            }
        };
        log::info!(
            "{} n={} n_perp={} n_p={:?}: error {:.3e}, cost {:.3e}",
            record.method.as_str(),
            record.n,
            record.n_perp,
            record.n_p,
            record.relative_error,
            record.relative_cost
        );
        records.push(record);
    }
    let mut fronts = BTreeMap::new();
    for method in [ParetoMethod::RomOnly, ParetoMethod::RomesInplane, ParetoMethod::RomesFull] {
        let idx: Vec<usize> = (0..records.len()).filter(|&i| records[i].method == method).collect();
        if idx.is_empty() {
            continue;
        }
        let pts: Vec<(f64, f64)> = idx
            .iter()
            .map(|&i| (records[i].relative_error, records[i].relative_cost))
            .collect();
        fronts.insert(method, pareto_front(&pts).into_iter().map(|k| idx[k]).collect());
    }
    Ok(ParetoStudy { records, fronts })
}

fn rom_only<T: Real>(
    problem: &dyn FomProblem<T>,
    base: &RomesConfig,
    n: usize,
    inputs: &OfflineInputs<T>,
    test: &FomSnapshots<T>,
    fom_ops: f64,
    fom_seconds: f64,
) -> Result<ParetoRecord> {
    let metric = build_metric(problem, base.metric)?;
    let (sub, _) = SubspaceSet::from_snapshots(&inputs.pod.matrix(), metric, n, 0)?;
    let tol = T::lit(base.solver.tol);
    let (mut err, mut ops, mut seconds) = (0.0, 0.0, 0.0);
    for (mu, u) in test.params.iter().zip(&test.states) {
        let start = Instant::now();
        let rom = solve_rom(problem, &sub, mu, base.projection, tol, base.solver.max_iters)?;
        seconds += start.elapsed().as_secs_f64();
        err += ((u - &rom.reconstructed).norm() / u.norm()).as_f64();
        ops += CostModel::rom(n, rom.newton_iters);
    }
    let count = test.len() as f64;
    Ok(ParetoRecord {
        method: ParetoMethod::RomOnly,
        n,
        n_perp: 0,
        n_p: None,
        relative_error: err / count,
        relative_cost: ops / count / fom_ops,
        relative_wall_time: seconds / count / fom_seconds,
    })
}
