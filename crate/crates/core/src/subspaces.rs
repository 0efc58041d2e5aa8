//! Metric, POD trial basis, out-of-plane basis, projectors and exact error
//! generalized coordinates.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result, RomError};
use crate::linalg::asymmetry;
use crate::problems::FomProblem;
use crate::scalar::Real;

/// Singular values below this fraction of the largest one count as zero.
pub const RANK_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Identity,
    DiscreteH1,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Identity => "identity",
            MetricKind::DiscreteH1 => "discrete_h1",
        }
    }
}

/// SPD inner-product matrix `Theta` with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct Metric<T: Real> {
    kind: Option<MetricKind>,
    matrix: DMatrix<T>,
    /// `None` for the identity metric.
    chol: Option<Cholesky<T, Dyn>>,
}

impl<T: Real> Metric<T> {
    pub fn identity(n: usize) -> Self {
        Self {
            kind: Some(MetricKind::Identity),
            matrix: DMatrix::identity(n, n),
            chol: None,
        }
    }

    /// Wraps an arbitrary SPD matrix (checked: symmetric to 1e-12, Cholesky succeeds).
    pub fn custom(matrix: DMatrix<T>) -> Result<Self> {
        Self::from_matrix(None, matrix)
    }

    fn from_matrix(kind: Option<MetricKind>, matrix: DMatrix<T>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(RomError::NotSpd("metric matrix is not square"));
        }
        let scale = matrix.amax().max(T::one());
        if asymmetry(&matrix) > T::lit(1e-12).max(T::eps() * T::lit(10.0)) * scale {
            return Err(RomError::NotSpd("metric matrix is not symmetric"));
        }
        let chol = Cholesky::new(matrix.clone())
            .ok_or(RomError::NotSpd("metric Cholesky factorization failed"))?;
        Ok(Self {
            kind,
            matrix,
            chol: Some(chol),
        })
    }

    /// `None` for custom metrics.
    pub fn kind(&self) -> Option<MetricKind> {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_identity(&self) -> bool {
        self.chol.is_none()
    }

    /// `Theta v`
    pub fn apply(&self, v: &DVector<T>) -> DVector<T> {
        if self.is_identity() {
            v.clone()
        } else {
            &self.matrix * v
        }
    }

    /// `Theta B`
    pub fn apply_matrix(&self, b: &DMatrix<T>) -> DMatrix<T> {
        if self.is_identity() {
            b.clone()
        } else {
            &self.matrix * b
        }
    }

    pub fn inner(&self, a: &DVector<T>, b: &DVector<T>) -> T {
        a.dot(&self.apply(b))
    }

    pub fn norm(&self, a: &DVector<T>) -> T {
        self.inner(a, a).max(T::zero()).sqrt()
    }

    /// `L^T X` where `Theta = L L^T`.
    fn lower_transpose_times(&self, x: &DMatrix<T>) -> DMatrix<T> {
        match &self.chol {
            None => x.clone(),
            Some(c) => c.l().transpose() * x,
        }
    }

    /// Solves `L^T Y = U`.
    fn solve_lower_transpose(&self, u: DMatrix<T>) -> DMatrix<T> {
        match &self.chol {
            None => u,
            Some(c) => c
                .l()
                .transpose()
                .solve_upper_triangular(&u)
                .expect("Cholesky factor has a positive diagonal"),
        }
    }
}

/// Builds the metric `kind` for `problem`.
pub fn build_metric<T: Real>(problem: &dyn FomProblem<T>, kind: MetricKind) -> Result<Metric<T>> {
    match kind {
        MetricKind::Identity => Ok(Metric::identity(problem.dimension())),
        MetricKind::DiscreteH1 => Metric::from_matrix(Some(kind), problem.metric_matrix(kind)?),
    }
}

/// Theta-weighted POD of a snapshot matrix.
#[derive(Debug, Clone)]
pub struct PodBasis<T: Real> {
    /// Leading modes, Theta-orthonormal, by decreasing singular value.
    pub modes: DMatrix<T>,
    /// Every singular value of `L^T X`, decreasing.
    pub singular_values: Vec<T>,
    pub rank: usize,
}

/// Returns the leading `n` Theta-POD modes of `snapshots` (no centering).
///
/// Computed from the SVD of `L^T X` (`Theta = L L^T`) with modes recovered by
/// back-substitution. Each mode's largest-magnitude entry is made positive.
pub fn pod<T: Real>(snapshots: &DMatrix<T>, metric: &Metric<T>, n: usize) -> Result<PodBasis<T>> {
    check_len("POD snapshot rows", metric.dimension(), snapshots.nrows())?;
    let weighted = metric.lower_transpose_times(snapshots);
    let svd = SVD::new(weighted, true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let singular_values: Vec<T> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let sigma_max = singular_values.first().copied().unwrap_or(T::zero());
    let cutoff = T::lit(RANK_CUTOFF) * sigma_max;
    let rank = singular_values
        .iter()
        .filter(|&&s| sigma_max > T::zero() && s > cutoff)
        .count();
    if n > rank {
        return Err(RomError::RankDeficient { requested: n, rank });
    }
    let mut left = DMatrix::zeros(snapshots.nrows(), n);
    for (col, &k) in order.iter().take(n).enumerate() {
        left.set_column(col, &u.column(k));
    }
    let mut modes = metric.solve_lower_transpose(left);
    for mut col in modes.column_iter_mut() {
        let imax = col.iamax();
        if col[imax] < T::zero() {
            col.neg_mut();
        }
    }
    Ok(PodBasis {
        modes,
        singular_values,
        rank,
    })
}

/// POD modes `n+1 ..= n+n_perp` (the discarded modes of an `n`-mode basis).
pub fn build_out_of_plane_basis<T: Real>(
    snapshots: &DMatrix<T>,
    metric: &Metric<T>,
    n: usize,
    n_perp: usize,
) -> Result<DMatrix<T>> {
    let basis = pod(snapshots, metric, n + n_perp)?;
    Ok(basis.modes.columns(n, n_perp).into_owned())
}

/// Theta-orthonormalizes the columns of `basis` (`B L_G^{-T}`, `G = B^T Theta B`).
pub fn theta_orthonormalize<T: Real>(basis: &DMatrix<T>, metric: &Metric<T>) -> Result<DMatrix<T>> {
    if basis.ncols() == 0 {
        return Ok(basis.clone());
    }
    let gram = basis.transpose() * metric.apply_matrix(basis);
    let chol = Cholesky::new(gram).ok_or(RomError::NotSpd("basis Gram matrix"))?;
    let lt = chol.l().transpose();
    let inv_lt = lt
        .solve_upper_triangular(&DMatrix::identity(basis.ncols(), basis.ncols()))
        .ok_or(RomError::NotSpd("basis Gram matrix"))?;
    Ok(basis * inv_lt)
}

/// In-plane and out-of-plane error generalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCoordinates<T: Real> {
    pub in_plane: DVector<T>,
    pub out_of_plane: DVector<T>,
}

impl<T: Real> ErrorCoordinates<T> {
    pub fn from_concatenated(all: &DVector<T>, n: usize) -> Self {
        Self {
            in_plane: all.rows(0, n).into_owned(),
            out_of_plane: all.rows(n, all.len() - n).into_owned(),
        }
    }

    pub fn len(&self) -> usize {
        self.in_plane.len() + self.out_of_plane.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn concatenated(&self) -> DVector<T> {
        let mut v = DVector::zeros(self.len());
        v.rows_mut(0, self.in_plane.len()).copy_from(&self.in_plane);
        v.rows_mut(self.in_plane.len(), self.out_of_plane.len())
            .copy_from(&self.out_of_plane);
        v
    }

    pub fn get(&self, i: usize) -> T {
        if i < self.in_plane.len() {
            self.in_plane[i]
        } else {
            self.out_of_plane[i - self.in_plane.len()]
        }
    }
}

/// Trial basis `Phi`, out-of-plane basis `Phi_perp`, metric and reference state.
#[derive(Debug, Clone)]
pub struct SubspaceSet<T: Real> {
    phi: DMatrix<T>,
    phi_perp: DMatrix<T>,
    phi_bar: DMatrix<T>,
    /// `Theta Phi_bar`
    theta_phi_bar: DMatrix<T>,
    /// Inverse Gram matrices of `Phi` and `Phi_bar` in the Theta inner product.
    gram_inv_phi: DMatrix<T>,
    gram_inv_bar: DMatrix<T>,
    metric: Metric<T>,
    reference: DVector<T>,
}

fn invariant_tolerance<T: Real>() -> T {
    T::lit(1e-10).max(T::eps() * T::lit(1e4))
}

impl<T: Real> SubspaceSet<T> {
    /// Assembles a subspace set, checking Theta-orthonormality of both bases
    /// and their mutual Theta-orthogonality to 1e-10.
    pub fn new(
        phi: DMatrix<T>,
        phi_perp: DMatrix<T>,
        metric: Metric<T>,
        reference: DVector<T>,
    ) -> Result<Self> {
        let n_state = metric.dimension();
        check_len("trial basis rows", n_state, phi.nrows())?;
        check_len("out-of-plane basis rows", n_state, phi_perp.nrows())?;
        check_len("reference state", n_state, reference.len())?;
        if phi.ncols() == 0 {
            return Err(RomError::Precondition("trial basis must have at least one column".into()));
        }
        let n = phi.ncols();
        let n_perp = phi_perp.ncols();
        let mut phi_bar = DMatrix::zeros(n_state, n + n_perp);
        phi_bar.columns_mut(0, n).copy_from(&phi);
        phi_bar.columns_mut(n, n_perp).copy_from(&phi_perp);
        let theta_phi_bar = metric.apply_matrix(&phi_bar);
        let gram = phi_bar.transpose() * &theta_phi_bar;

        let tol = invariant_tolerance::<T>();
        let check = |block: DMatrix<T>, identity: bool, what: &str| -> Result<()> {
            let target = if identity {
                DMatrix::identity(block.nrows(), block.ncols())
            } else {
                DMatrix::zeros(block.nrows(), block.ncols())
            };
            let dev = crate::linalg::max_abs_diff(&block, &target);
            if dev > tol {
                Err(RomError::BasisInvariant(format!("{what} deviates by {dev}")))
            } else {
                Ok(())
            }
        };
        check(gram.view((0, 0), (n, n)).into_owned(), true, "Phi^T Theta Phi - I")?;
        check(gram.view((n, n), (n_perp, n_perp)).into_owned(), true, "Phi_perp^T Theta Phi_perp - I")?;
        check(gram.view((0, n), (n, n_perp)).into_owned(), false, "Phi^T Theta Phi_perp")?;

        let gram_inv_bar = gram
            .clone()
            .cholesky()
            .ok_or(RomError::NotSpd("basis Gram matrix"))?
            .inverse();
        let gram_inv_phi = gram
            .view((0, 0), (n, n))
            .into_owned()
            .cholesky()
            .ok_or(RomError::NotSpd("trial basis Gram matrix"))?
            .inverse();
        Ok(Self {
            phi,
            phi_perp,
            phi_bar,
            theta_phi_bar,
            gram_inv_phi,
            gram_inv_bar,
            metric,
            reference,
        })
    }

    /// Centers snapshots at their mean, runs Theta-POD and splits the leading
    /// `n + n_perp` modes into `Phi` and `Phi_perp`. Also returns the singular values.
    pub fn from_snapshots(
        snapshots: &DMatrix<T>,
        metric: Metric<T>,
        n: usize,
        n_perp: usize,
    ) -> Result<(Self, Vec<T>)> {
        let reference = snapshot_mean(snapshots);
        let mut centered = snapshots.clone();
        for mut col in centered.column_iter_mut() {
            col -= &reference;
        }
        let basis = pod(&centered, &metric, n + n_perp)?;
        let phi = basis.modes.columns(0, n).into_owned();
        let phi_perp = basis.modes.columns(n, n_perp).into_owned();
        Ok((Self::new(phi, phi_perp, metric, reference)?, basis.singular_values))
    }

    pub fn phi(&self) -> &DMatrix<T> {
        &self.phi
    }

    pub fn phi_perp(&self) -> &DMatrix<T> {
        &self.phi_perp
    }

    /// `[Phi Phi_perp]`
    pub fn phi_bar(&self) -> &DMatrix<T> {
        &self.phi_bar
    }

    pub fn metric(&self) -> &Metric<T> {
        &self.metric
    }

    pub fn reference_state(&self) -> &DVector<T> {
        &self.reference
    }

    pub fn state_dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n(&self) -> usize {
        self.phi.ncols()
    }

    pub fn n_perp(&self) -> usize {
        self.phi_perp.ncols()
    }

    pub fn n_bar(&self) -> usize {
        self.phi_bar.ncols()
    }

    /// In-plane coordinates `(Phi^T Theta Phi)^{-1} Phi^T Theta w`.
    pub fn in_plane_coordinates(&self, w: &DVector<T>) -> Result<DVector<T>> {
        check_len("in-plane projection", self.state_dim(), w.len())?;
        let n = self.n();
        let rhs = self.theta_phi_bar.columns(0, n).tr_mul(w);
        Ok(&self.gram_inv_phi * rhs)
    }

    /// `P_par w = Phi (Phi^T Theta Phi)^{-1} Phi^T Theta w`.
    pub fn project_in_plane(&self, w: &DVector<T>) -> Result<DVector<T>> {
        Ok(&self.phi * self.in_plane_coordinates(w)?)
    }

    /// `P_bar w = (Phi_bar^T Theta Phi_bar)^{-1} Phi_bar^T Theta w`.
    pub fn generalized_coordinates(&self, w: &DVector<T>) -> Result<DVector<T>> {
        check_len("generalized coordinates", self.state_dim(), w.len())?;
        Ok(&self.gram_inv_bar * self.theta_phi_bar.tr_mul(w))
    }

    /// `Phi_bar c`
    pub fn reconstruct(&self, coords: &DVector<T>) -> Result<DVector<T>> {
        check_len("reconstruction coordinates", self.n_bar(), coords.len())?;
        Ok(&self.phi_bar * coords)
    }

    /// Column `i` of `P_bar^T`, i.e. `Theta Phi_bar (Phi_bar^T Theta Phi_bar)^{-1} e_i`.
    pub fn projector_transpose_column(&self, i: usize) -> DVector<T> {
        &self.theta_phi_bar * self.gram_inv_bar.column(i)
    }

    /// `P_bar^T` as an `N x n_bar` matrix.
    pub fn projector_transpose(&self) -> DMatrix<T> {
        &self.theta_phi_bar * &self.gram_inv_bar
    }

    /// Exact error generalized coordinates of `fom_state - rom_state`.
    pub fn error_generalized_coordinates(
        &self,
        fom_state: &DVector<T>,
        rom_state: &DVector<T>,
    ) -> Result<ErrorCoordinates<T>> {
        check_len("FOM state", self.state_dim(), fom_state.len())?;
        check_len("ROM state", self.state_dim(), rom_state.len())?;
        let all = self.generalized_coordinates(&(fom_state - rom_state))?;
        Ok(ErrorCoordinates::from_concatenated(&all, self.n()))
    }
}

/// Free-function form of [`SubspaceSet::project_in_plane`].
pub fn project_in_plane<T: Real>(sub: &SubspaceSet<T>, w: &DVector<T>) -> Result<DVector<T>> {
    sub.project_in_plane(w)
}

/// Free-function form of [`SubspaceSet::error_generalized_coordinates`].
pub fn error_generalized_coordinates<T: Real>(
    sub: &SubspaceSet<T>,
    fom_state: &DVector<T>,
    rom_state: &DVector<T>,
) -> Result<ErrorCoordinates<T>> {
    sub.error_generalized_coordinates(fom_state, rom_state)
}

pub fn snapshot_mean<T: Real>(snapshots: &DMatrix<T>) -> DVector<T> {
    let count = snapshots.ncols().max(1);
    snapshots.column_sum() / T::from_usize_lossy(count)
}
