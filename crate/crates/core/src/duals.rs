//! Dual (adjoint) problems for the error generalized coordinates, their
//! reduced-order approximations, and dual-weighted-residual indicators.
//!
//! Coordinate indices are zero-based: `0..n` are in-plane, `n..n_bar` out-of-plane.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result, RomError};
use crate::linalg::{max_abs_diff, DenseLu};
use crate::problems::{FomProblem, ParameterVector};
use crate::rom::{solve_rom, Projection};
use crate::scalar::Real;
use crate::subspaces::{pod, Metric, SubspaceSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualMode {
    /// One basis for all `n_bar` dual problems.
    #[default]
    Shared,
    /// One basis per error coordinate.
    Unique,
}

/// Dual trial bases with Euclidean-orthonormal columns.
#[derive(Debug, Clone)]
pub struct DualBasis<T: Real> {
    mode: DualMode,
    bases: Vec<DMatrix<T>>,
}

impl<T: Real> DualBasis<T> {
    /// Checks the basis count against `mode`/`n_bar` and orthonormality to 1e-10.
    pub fn new(mode: DualMode, bases: Vec<DMatrix<T>>, n_bar: usize) -> Result<Self> {
        let expected = match mode {
            DualMode::Shared => 1,
            DualMode::Unique => n_bar,
        };
        if bases.len() != expected {
            return Err(RomError::BasisInvariant(format!(
                "{mode:?} dual basis needs {expected} matrices, got {}",
                bases.len()
            )));
        }
        let tol = T::lit(1e-10).max(T::eps() * T::lit(1e4));
        for (k, b) in bases.iter().enumerate() {
            if b.ncols() == 0 {
                return Err(RomError::Precondition("dual basis dimension n_p must be at least 1".into()));
            }
            let gram = b.tr_mul(b);
            let dev = max_abs_diff(&gram, &DMatrix::identity(b.ncols(), b.ncols()));
            if dev > tol {
                return Err(RomError::BasisInvariant(format!(
                    "dual basis {k} is not orthonormal (deviation {dev})"
                )));
            }
        }
        Ok(Self { mode, bases })
    }

    /// Shared identity basis (`n_p = N`): reduced duals coincide with full duals.
    pub fn full(state_dim: usize) -> Self {
        Self {
            mode: DualMode::Shared,
            bases: vec![DMatrix::identity(state_dim, state_dim)],
        }
    }

    pub fn mode(&self) -> DualMode {
        self.mode
    }

    pub fn bases(&self) -> &[DMatrix<T>] {
        &self.bases
    }

    /// Basis used for coordinate `i`.
    pub fn basis_for(&self, i: usize) -> &DMatrix<T> {
        match self.mode {
            DualMode::Shared => &self.bases[0],
            DualMode::Unique => &self.bases[i],
        }
    }

    /// Largest basis dimension.
    pub fn n_p(&self) -> usize {
        self.bases.iter().map(|b| b.ncols()).max().unwrap_or(0)
    }
}

/// Full duals for every coordinate as columns of an `N x n_bar` matrix:
/// `J(x_ROM)^T Y = -P_bar^T`.
pub fn solve_dual_fom_all<T: Real>(
    problem: &dyn FomProblem<T>,
    sub: &SubspaceSet<T>,
    rom_state: &DVector<T>,
    mu: &ParameterVector<T>,
) -> Result<DMatrix<T>> {
    let jac = problem.jacobian(rom_state, mu)?;
    let lu = DenseLu::factor(jac.transpose(), "full dual solve", 0)?;
    Ok(-lu.solve_matrix(&sub.projector_transpose()))
}

/// Full dual `y_i` solving `J(x_ROM)^T y_i = -P_bar^T e_i`.
pub fn solve_dual_fom<T: Real>(
    problem: &dyn FomProblem<T>,
    sub: &SubspaceSet<T>,
    rom_state: &DVector<T>,
    mu: &ParameterVector<T>,
    i: usize,
) -> Result<DVector<T>> {
    if i >= sub.n_bar() {
        return Err(RomError::Precondition(format!(
            "dual index {i} out of range for n_bar = {}",
            sub.n_bar()
        )));
    }
    let jac = problem.jacobian(rom_state, mu)?;
    let lu = DenseLu::factor(jac.transpose(), "full dual solve", 0)?;
    Ok(-lu.solve(&sub.projector_transpose_column(i)))
}

/// Full duals at the ROM state of each training parameter (one `N x n_bar`
/// matrix per parameter).
pub fn dual_snapshots<T: Real>(
    problem: &dyn FomProblem<T>,
    sub: &SubspaceSet<T>,
    training_params: &[ParameterVector<T>],
    projection: Projection,
    tol: T,
    max_iters: usize,
) -> Result<Vec<DMatrix<T>>> {
    training_params
        .iter()
        .map(|mu| {
            let rom = solve_rom(problem, sub, mu, projection, tol, max_iters)?;
            if !rom.converged {
                log::warn!("ROM did not converge while collecting dual snapshots");
            }
            solve_dual_fom_all(problem, sub, &rom.reconstructed, mu)
        })
        .collect()
}

/// Euclidean POD of dual snapshots. Shared mode pools all coordinates;
/// unique mode compresses each coordinate's snapshots separately.
pub fn dual_basis_from_snapshots<T: Real>(
    snapshots: &[DMatrix<T>],
    mode: DualMode,
    n_p: usize,
) -> Result<DualBasis<T>> {
    if n_p == 0 {
        return Err(RomError::Precondition("dual basis dimension n_p must be at least 1".into()));
    }
    let first = snapshots
        .first()
        .ok_or_else(|| RomError::Precondition("no dual snapshots".into()))?;
    let (n_state, n_bar) = first.shape();
    for s in snapshots {
        check_len("dual snapshot rows", n_state, s.nrows())?;
        check_len("dual snapshot columns", n_bar, s.ncols())?;
    }
    let euclid = Metric::identity(n_state);
    let bases = match mode {
        DualMode::Shared => {
            let mut pooled = DMatrix::zeros(n_state, n_bar * snapshots.len());
            for (k, s) in snapshots.iter().enumerate() {
                pooled.columns_mut(k * n_bar, n_bar).copy_from(s);
            }
            vec![pod(&pooled, &euclid, n_p)?.modes]
        }
        DualMode::Unique => (0..n_bar)
            .map(|i| {
                let cols: Vec<_> = snapshots.iter().map(|s| s.column(i).into_owned()).collect();
                Ok(pod(&DMatrix::from_columns(&cols), &euclid, n_p)?.modes)
            })
            .collect::<Result<Vec<_>>>()?,
    };
    DualBasis::new(mode, bases, n_bar)
}

/// Alg. 1 step 3: ROM solves and full dual solves over `training_params`,
/// then Euclidean POD.
#[allow(clippy::too_many_arguments)]
pub fn build_dual_reduced_basis<T: Real>(
    problem: &dyn FomProblem<T>,
    sub: &SubspaceSet<T>,
    training_params: &[ParameterVector<T>],
    mode: DualMode,
    n_p: usize,
    projection: Projection,
    tol: T,
    max_iters: usize,
) -> Result<DualBasis<T>> {
    let snaps = dual_snapshots(problem, sub, training_params, projection, tol, max_iters)?;
    dual_basis_from_snapshots(&snaps, mode, n_p)
}

/// Reconstructed approximate duals and the number of reduced factorizations used.
#[derive(Debug, Clone)]
pub struct ReducedDuals<T: Real> {
    /// `y_hat_i = Phi_{y_i} * reduced solution`, one per coordinate.
    pub duals: Vec<DVector<T>>,
    pub factorizations: usize,
}

/// Solves the reduced dual systems at `rom_state`.
///
/// Galerkin: `Phi_p^T J^T Phi_p z = -Phi_p^T P_bar^T e_i`. LSPG: least squares
/// on `J^T Phi_p z + P_bar^T e_i` by QR. In shared mode the reduced operator
/// is factorized once and reused for every right-hand side.
pub fn solve_dual_rom<T: Real>(
    problem: &dyn FomProblem<T>,
    sub: &SubspaceSet<T>,
    dual_basis: &DualBasis<T>,
    rom_state: &DVector<T>,
    mu: &ParameterVector<T>,
    projection: Projection,
) -> Result<ReducedDuals<T>> {
    let n_bar = sub.n_bar();
    if dual_basis.mode() == DualMode::Unique && dual_basis.bases().len() != n_bar {
        return Err(RomError::DimensionMismatch {
            context: "unique dual bases",
            expected: n_bar,
            actual: dual_basis.bases().len(),
        });
    }
    for b in dual_basis.bases() {
        check_len("dual basis rows", sub.state_dim(), b.nrows())?;
    }
    let jac_t = problem.jacobian(rom_state, mu)?.transpose();
    let rhs_all = -sub.projector_transpose();
    let mut duals = Vec::with_capacity(n_bar);
    let mut factorizations = 0;
    let groups: Vec<(&DMatrix<T>, Vec<usize>)> = match dual_basis.mode() {
        DualMode::Shared => vec![(dual_basis.basis_for(0), (0..n_bar).collect())],
        DualMode::Unique => (0..n_bar).map(|i| (dual_basis.basis_for(i), vec![i])).collect(),
    };
    let mut solved: Vec<Option<DVector<T>>> = vec![None; n_bar];
    for (basis, indices) in groups {
        let jt_phi = &jac_t * basis;
        let mut rhs = DMatrix::zeros(sub.state_dim(), indices.len());
        for (c, &i) in indices.iter().enumerate() {
            rhs.set_column(c, &rhs_all.column(i));
        }
        let coeffs = match projection {
            Projection::Galerkin => {
                let lu = DenseLu::factor(basis.tr_mul(&jt_phi), "reduced dual solve", 0)?;
                factorizations += 1;
                lu.solve_matrix(&basis.tr_mul(&rhs))
            }
            Projection::Lspg => {
                let qr = jt_phi.qr();
                factorizations += 1;
                let r = qr.r();
                let max_diag = r.diagonal().amax();
                let threshold = T::from_usize_lossy(sub.state_dim()) * T::eps() * max_diag;
                if max_diag == T::zero() || r.diagonal().iter().any(|d| d.abs() <= threshold) {
                    return Err(RomError::SingularSystem {
                        context: "reduced dual least squares",
                        iteration: 0,
                    });
                }
                r.solve_upper_triangular(&qr.q().tr_mul(&rhs))
                    .ok_or(RomError::SingularSystem {
                        context: "reduced dual least squares",
                        iteration: 0,
                    })?
            }
        };
        let recon = basis * coeffs;
        for (c, &i) in indices.iter().enumerate() {
            solved[i] = Some(recon.column(c).into_owned());
        }
    }
    duals.extend(solved.into_iter().map(|d| d.expect("every coordinate solved")));
    Ok(ReducedDuals {
        duals,
        factorizations,
    })
}

/// Dual-weighted residuals `rho_i = y_hat_i^T r(x_ROM)`.
pub fn compute_indicators<T: Real>(
    problem: &dyn FomProblem<T>,
    approximate_duals: &[DVector<T>],
    rom_state: &DVector<T>,
    mu: &ParameterVector<T>,
) -> Result<DVector<T>> {
    let r = problem.residual(rom_state, mu)?;
    let mut rho = DVector::zeros(approximate_duals.len());
    for (i, y) in approximate_duals.iter().enumerate() {
        check_len("approximate dual", r.len(), y.len())?;
        rho[i] = y.dot(&r);
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{solve_fom, AffineProblem, LinearDiffusion, NonlinearReaction};
    use crate::subspaces::{build_metric, MetricKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn subspace(problem: &dyn FomProblem<f64>, kind: MetricKind, n: usize, n_perp: usize, seed: u64) -> SubspaceSet<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<_> = (0..n + n_perp + 4)
            .map(|_| {
                let mu = problem.parameter_box().sample(&mut rng);
                solve_fom(problem, &mu, None, 1e-12, 30).unwrap().values
            })
            .collect();
        let metric = build_metric(problem, kind).unwrap();
        SubspaceSet::from_snapshots(&DMatrix::from_columns(&cols), metric, n, n_perp).unwrap().0
    }

    fn rom_state(p: &dyn FomProblem<f64>, sub: &SubspaceSet<f64>, mu: &ParameterVector<f64>) -> DVector<f64> {
        solve_rom(p, sub, mu, Projection::Galerkin, 1e-12, 30).unwrap().reconstructed
    }

    #[test]
    fn linear_duals_match_dense_multi_rhs_oracle() {
        let p = LinearDiffusion::<f64>::new(6);
        let sub = subspace(&p, MetricKind::DiscreteH1, 2, 2, 1);
        let mu = p.parameter_box().sample(&mut ChaCha8Rng::seed_from_u64(2));
        let x = rom_state(&p, &sub, &mu);
        let y = solve_dual_fom_all(&p, &sub, &x, &mu).unwrap();
        // P_bar^T assembled from scratch
        let pb = sub.phi_bar();
        let theta = sub.metric().matrix();
        let gram = pb.transpose() * theta * pb;
        let p_bar_t = theta * pb * gram.try_inverse().unwrap();
        let oracle = -p.system_matrix(&mu).transpose().lu().solve(&(-p_bar_t)).unwrap();
        assert!((&y - &oracle).amax() <= 1e-10 * oracle.amax());
        let y1 = solve_dual_fom(&p, &sub, &x, &mu, 1).unwrap();
        assert!((y1 - y.column(1)).amax() <= 1e-12 * oracle.amax());
    }

    #[test]
    fn identity_jacobian_gives_negated_projector_rows() {
        let n = 6;
        let p = AffineProblem::new(-DMatrix::<f64>::identity(n, n), DVector::from_element(n, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let snaps = DMatrix::from_fn(n, 5, |_, _| rng.random_range(-1.0..1.0));
        let (sub, _) = SubspaceSet::from_snapshots(&snaps, Metric::identity(n), 2, 1).unwrap();
        let mu = p.parameter_box().center();
        let y = solve_dual_fom_all(&p, &sub, &DVector::zeros(n), &mu).unwrap();
        assert!((y + sub.projector_transpose()).amax() < 1e-14);
    }

    #[test]
    fn linear_dual_weighted_residual_is_exact() {
        let p = LinearDiffusion::<f64>::new(6);
        let sub = subspace(&p, MetricKind::Identity, 2, 1, 4);
        let mu = p.parameter_box().sample(&mut ChaCha8Rng::seed_from_u64(5));
        let x = rom_state(&p, &sub, &mu);
        let u = solve_fom(&p, &mu, None, 1e-12, 2).unwrap().values;
        let y = solve_dual_fom_all(&p, &sub, &x, &mu).unwrap();
        let duals: Vec<_> = y.column_iter().map(|c| c.into_owned()).collect();
        let rho = compute_indicators(&p, &duals, &x, &mu).unwrap();
        let delta = sub.error_generalized_coordinates(&u, &x).unwrap().concatenated();
        assert!((rho - &delta).amax() <= 1e-9 * delta.amax().max(1e-300));
    }

    #[test]
    fn shared_basis_from_one_parameter_reproduces_its_duals() {
        let p = NonlinearReaction::<f64>::new(6);
        let sub = subspace(&p, MetricKind::Identity, 2, 1, 6);
        let mu = p.parameter_box().sample(&mut ChaCha8Rng::seed_from_u64(7));
        let basis = build_dual_reduced_basis(&p, &sub, std::slice::from_ref(&mu), DualMode::Shared, 3, Projection::Galerkin, 1e-12, 30).unwrap();
        let x = rom_state(&p, &sub, &mu);
        let full = solve_dual_fom_all(&p, &sub, &x, &mu).unwrap();
        let reduced = solve_dual_rom(&p, &sub, &basis, &x, &mu, Projection::Galerkin).unwrap();
        for (i, y) in reduced.duals.iter().enumerate() {
            assert!((y - full.column(i)).amax() <= 1e-8 * full.amax());
        }
    }

    #[test]
    fn unique_basis_of_constant_duals_is_normalized_dual() {
        let n = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let a = &b * b.transpose() + DMatrix::identity(n, n);
        let p = AffineProblem::new(a, DVector::from_element(n, 1.0));
        let snaps = DMatrix::from_fn(n, 4, |_, _| rng.random_range(-1.0..1.0));
        let (sub, _) = SubspaceSet::from_snapshots(&snaps, Metric::identity(n), 2, 0).unwrap();
        let mu = p.parameter_box().center();
        let params = vec![mu.clone(), mu.clone()];
        let basis = build_dual_reduced_basis(&p, &sub, &params, DualMode::Unique, 1, Projection::Galerkin, 1e-12, 5).unwrap();
        let x = rom_state(&p, &sub, &mu);
        let full = solve_dual_fom_all(&p, &sub, &x, &mu).unwrap();
        for i in 0..2 {
            let y = full.column(i).into_owned();
            let mode = basis.basis_for(i).column(0).into_owned();
            let aligned = (y.dot(&mode) / y.norm()).abs();
            assert!((aligned - 1.0).abs() < 1e-12);
            assert!(mode[mode.iamax()] > 0.0);
        }
    }

    #[test]
    fn shared_subspace_contains_unique_subspaces() {
        let p = LinearDiffusion::<f64>::new(5);
        let sub = subspace(&p, MetricKind::Identity, 2, 1, 9);
        let params = p.parameter_box().sample_many(3, &mut ChaCha8Rng::seed_from_u64(10));
        let snaps = dual_snapshots(&p, &sub, &params, Projection::Galerkin, 1e-12, 5).unwrap();
        // pooled rank is 9 (3 coordinates x 3 parameters)
        let shared = dual_basis_from_snapshots(&snaps, DualMode::Shared, 9).unwrap();
        let unique = dual_basis_from_snapshots(&snaps, DualMode::Unique, 3).unwrap();
        for u in unique.bases() {
            let cosines = (shared.bases()[0].transpose() * u).svd(false, false).singular_values;
            assert!(cosines.iter().all(|&c| (c - 1.0).abs() < 1e-8), "{cosines}");
        }
    }

    #[test]
    fn full_dual_basis_matches_full_duals_and_counts_one_factorization() {
        let p = NonlinearReaction::<f64>::new(6);
        let sub = subspace(&p, MetricKind::DiscreteH1, 2, 2, 11);
        let mu = p.parameter_box().sample(&mut ChaCha8Rng::seed_from_u64(12));
        let x = rom_state(&p, &sub, &mu);
        let full = solve_dual_fom_all(&p, &sub, &x, &mu).unwrap();
        for projection in [Projection::Galerkin, Projection::Lspg] {
            let red = solve_dual_rom(&p, &sub, &DualBasis::full(p.dimension()), &x, &mu, projection).unwrap();
            assert_eq!(red.factorizations, 1);
            for (i, y) in red.duals.iter().enumerate() {
                assert!((y - full.column(i)).amax() <= 1e-9 * full.amax());
            }
        }
    }

    #[test]
    fn reduced_dual_residual_is_orthogonal_to_basis() {
        let p = NonlinearReaction::<f64>::new(6);
        let sub = subspace(&p, MetricKind::Identity, 2, 1, 13);
        let params = p.parameter_box().sample_many(4, &mut ChaCha8Rng::seed_from_u64(14));
        let basis = build_dual_reduced_basis(&p, &sub, &params, DualMode::Shared, 5, Projection::Galerkin, 1e-12, 30).unwrap();
        let mu = p.parameter_box().center();
        let x = rom_state(&p, &sub, &mu);
        let red = solve_dual_rom(&p, &sub, &basis, &x, &mu, Projection::Galerkin).unwrap();
        assert_eq!(red.factorizations, 1);
        let jt = p.jacobian(&x, &mu).unwrap().transpose();
        let pbt = sub.projector_transpose();
        for (i, y) in red.duals.iter().enumerate() {
            let dual_res = &jt * y + pbt.column(i);
            let proj = basis.bases()[0].tr_mul(&dual_res);
            assert!(proj.amax() <= 1e-9 * pbt.column(i).amax().max(1.0));
        }
        let unique = build_dual_reduced_basis(&p, &sub, &params, DualMode::Unique, 3, Projection::Galerkin, 1e-12, 30).unwrap();
        let red = solve_dual_rom(&p, &sub, &unique, &x, &mu, Projection::Galerkin).unwrap();
        assert_eq!(red.factorizations, sub.n_bar());
    }

    #[test]
    fn zero_dimensional_dual_basis_is_rejected() {
        let snaps = vec![DMatrix::<f64>::identity(4, 2)];
        assert!(matches!(dual_basis_from_snapshots(&snaps, DualMode::Shared, 0), Err(RomError::Precondition(_))));
        assert!(DualBasis::new(DualMode::Shared, vec![DMatrix::<f64>::zeros(4, 0)], 2).is_err());
    }

    #[test]
    fn zero_residual_gives_zero_indicators() {
        let p = LinearDiffusion::<f64>::new(5);
        let mu = p.parameter_box().center();
        let u = solve_fom(&p, &mu, None, 1e-14, 2).unwrap().values;
        let duals = vec![DVector::from_element(p.dimension(), 1.0); 3];
        let rho = compute_indicators(&p, &duals, &u, &mu).unwrap();
        assert!(rho.amax() < 1e-10);
    }

    #[test]
    fn dual_weighted_residual_error_is_second_order() {
        let p = NonlinearReaction::<f64>::new(6);
        let sub = subspace(&p, MetricKind::Identity, 2, 1, 15);
        let mu = p.parameter_box().center();
        let u = solve_fom(&p, &mu, None, 1e-13, 30).unwrap().values;
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let dir = DVector::from_fn(p.dimension(), |_, _| rng.random_range(-1.0..1.0));
        let dir = &dir / dir.norm();
        let mut ratios = Vec::new();
        for eps in [1e-1, 3e-2, 1e-2, 3e-3] {
            let x = &u + &dir * eps;
            let y = solve_dual_fom_all(&p, &sub, &x, &mu).unwrap();
            let duals: Vec<_> = y.column_iter().map(|c| c.into_owned()).collect();
            let rho = compute_indicators(&p, &duals, &x, &mu).unwrap();
            let delta = sub.error_generalized_coordinates(&u, &x).unwrap().concatenated();
            let gap = (rho - delta).amax();
            ratios.push(gap / (eps * eps));
        }
        let max = ratios.iter().cloned().fold(0.0, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min < 3.0 && max > 0.0, "{ratios:?}");
    }
}
