//! Offline training and online prediction of ROMES error models, with the
//! statistical validation metrics and the cost/accuracy study built on them.

mod checkpoint;
mod metrics;
mod pareto;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::duals::{compute_indicators, dual_basis_from_snapshots, dual_snapshots, solve_dual_rom, DualBasis, DualMode};
use crate::error::{check_len, Result, RomError};
use crate::gpr::{cross_validate, scaled_grid, GpErrorModel, GridBounds, LossKind, DEFAULT_FOLDS};
use crate::problems::{solve_fom, FomProblem, ParameterBox, ParameterVector, QoiFunctional, QoiKind};
use crate::rom::{solve_rom, Projection, RomSolution};
use crate::scalar::Real;
use crate::subspaces::{build_metric, pod, snapshot_mean, MetricKind, SubspaceSet};

pub use crate::gpr::ks_statistic;
pub use metrics::{
    error_metrics, error_metrics_with, fvu, relative_state_errors, validation_frequency, CoordinateStats,
    ErrorMetrics, PointRecord, QoiErrors, StateErrors, VALIDATION_OMEGAS,
};
pub use pareto::{pareto_front, pareto_study, CostModel, ParetoMethod, ParetoPoint, ParetoRecord, ParetoStudy};

/// Newton tolerance and iteration cap shared by FOM and ROM solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetSizes {
    pub pod: usize,
    pub dual: usize,
    pub romes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub pod: u64,
    pub dual: u64,
    pub romes: u64,
    /// Fold shuffling; coordinate `i` uses `cv + i`.
    pub cv: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            pod: 1,
            dual: 2,
            romes: 3,
            cv: 4,
        }
    }
}

/// How GP variances are mapped to per-entry state variances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceWeighting {
    /// `sum_j Phi_bar_ij^2 v_j`, the variance of the linear map.
    #[default]
    Squared,
    /// `sum_j Phi_bar_ij v_j`; can be negative.
    AsWritten,
}

fn default_metric() -> MetricKind {
    MetricKind::DiscreteH1
}
fn default_loss() -> LossKind {
    LossKind::LogLikelihood
}
fn default_folds() -> usize {
    DEFAULT_FOLDS
}
fn default_grid_points() -> usize {
    12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RomesConfig {
    pub n: usize,
    #[serde(default)]
    pub n_perp: usize,
    pub n_p: usize,
    #[serde(default = "default_metric")]
    pub metric: MetricKind,
    #[serde(default)]
    pub projection: Projection,
    #[serde(default)]
    pub dual_projection: Projection,
    #[serde(default)]
    pub dual_mode: DualMode,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Values per hyperparameter axis of the default grid.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub grid_bounds: GridBounds,
    pub sizes: SetSizes,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub variance_weighting: VarianceWeighting,
}

impl RomesConfig {
    /// Defaults everywhere except the dimensions and set sizes.
    pub fn new(n: usize, n_perp: usize, n_p: usize, sizes: SetSizes) -> Self {
        Self {
            n,
            n_perp,
            n_p,
            metric: default_metric(),
            projection: Projection::default(),
            dual_projection: Projection::default(),
            dual_mode: DualMode::default(),
            loss: default_loss(),
            folds: default_folds(),
            grid_points: default_grid_points(),
            grid_bounds: GridBounds::default(),
            sizes,
            seeds: Seeds::default(),
            solver: SolverSettings::default(),
            variance_weighting: VarianceWeighting::default(),
        }
    }

    pub fn n_bar(&self) -> usize {
        self.n + self.n_perp
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(RomError::Precondition(msg));
        if self.n == 0 || self.n_p == 0 {
            return fail("n and n_p must be at least 1".into());
        }
        if self.sizes.pod == 0 || self.sizes.dual == 0 || self.sizes.romes == 0 {
            return fail("training set sizes must be at least 1".into());
        }
        if self.folds < 2 || self.sizes.romes < self.folds {
            return fail(format!(
                "need folds >= 2 and |D_ROMES| >= folds (folds = {}, |D_ROMES| = {})",
                self.folds, self.sizes.romes
            ));
        }
        if self.grid_points == 0 {
            return fail("grid_points must be at least 1".into());
        }
        self.grid_bounds.validate()?;
        if !(self.solver.tol > 0.0) || self.solver.max_iters == 0 {
            return fail("solver needs tol > 0 and max_iters >= 1".into());
        }
        self.loss.validate()
    }
}

/// `count` independent uniform draws from `domain`.
pub fn draw_parameters<T: Real>(domain: &ParameterBox<T>, count: usize, seed: u64) -> Vec<ParameterVector<T>> {
    domain.sample_many(count, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Converged FOM states at a list of parameters.
#[derive(Debug, Clone)]
pub struct FomSnapshots<T: Real> {
    pub params: Vec<ParameterVector<T>>,
    pub states: Vec<DVector<T>>,
    pub newton_iters: Vec<usize>,
    /// Wall time of each solve.
    pub seconds: Vec<f64>,
}

impl<T: Real> FomSnapshots<T> {
    /// Solves the FOM at every parameter; non-convergence is an error.
    pub fn solve(problem: &dyn FomProblem<T>, params: Vec<ParameterVector<T>>, solver: &SolverSettings) -> Result<Self> {
        let mut states = Vec::with_capacity(params.len());
        let mut newton_iters = Vec::with_capacity(params.len());
        let mut seconds = Vec::with_capacity(params.len());
        for mu in &params {
            let start = std::time::Instant::now();
            let s = solve_fom(problem, mu, None, T::lit(solver.tol), solver.max_iters)?;
            seconds.push(start.elapsed().as_secs_f64());
            if !s.converged {
                return Err(RomError::NumericalGuard("FOM solve did not converge"));
            }
            states.push(s.values);
            newton_iters.push(s.newton_iters);
        }
        Ok(Self {
            params,
            states,
            newton_iters,
            seconds,
        })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// States as columns.
    pub fn matrix(&self) -> DMatrix<T> {
        DMatrix::from_columns(&self.states)
    }

    /// The first `count` snapshots.
    pub fn truncated(&self, count: usize) -> Self {
        let k = count.min(self.len());
        Self {
            params: self.params[..k].to_vec(),
            states: self.states[..k].to_vec(),
            newton_iters: self.newton_iters[..k].to_vec(),
            seconds: self.seconds[..k].to_vec(),
        }
    }
}

/// Everything the offline stage needs that does not depend on `n`, `n_perp`
/// or `n_p`; reusable across configurations.
#[derive(Debug, Clone)]
pub struct OfflineInputs<T: Real> {
    pub pod: FomSnapshots<T>,
    pub dual_params: Vec<ParameterVector<T>>,
    pub romes: FomSnapshots<T>,
}

impl<T: Real> OfflineInputs<T> {
    /// Draws the three training sets with their own seeds and solves the FOM
    /// on the POD and ROMES sets.
    pub fn generate(problem: &dyn FomProblem<T>, config: &RomesConfig) -> Result<Self> {
        let domain = problem.parameter_box();
        let pod_params = draw_parameters(domain, config.sizes.pod, config.seeds.pod);
        let dual_params = draw_parameters(domain, config.sizes.dual, config.seeds.dual);
        let romes_params = draw_parameters(domain, config.sizes.romes, config.seeds.romes);
        Ok(Self {
            pod: FomSnapshots::solve(problem, pod_params, &config.solver).map_err(|e| e.at_step(1))?,
            dual_params,
            romes: FomSnapshots::solve(problem, romes_params, &config.solver).map_err(|e| e.at_step(4))?,
        })
    }
}

/// ROMES training pairs: row `k` holds `rho(mu_k)` / `delta_hat(mu_k)`.
#[derive(Debug, Clone)]
pub struct TrainingPairs<T: Real> {
    pub features: DMatrix<T>,
    pub responses: DMatrix<T>,
}

/// Provenance of a trained package.
#[derive(Debug, Clone)]
pub struct TrainingSets<T: Real> {
    pub pod: Vec<ParameterVector<T>>,
    pub dual: Vec<ParameterVector<T>>,
    pub romes: Vec<ParameterVector<T>>,
}

/// Output of the offline stage.
#[derive(Debug, Clone)]
pub struct OfflinePackage<T: Real> {
    pub config: RomesConfig,
    pub subspaces: SubspaceSet<T>,
    pub singular_values: Vec<T>,
    pub dual_basis: DualBasis<T>,
    pub gp_models: Vec<GpErrorModel<T>>,
    pub training: TrainingPairs<T>,
    pub sets: TrainingSets<T>,
}

impl<T: Real> OfflinePackage<T> {
    pub fn n_bar(&self) -> usize {
        self.gp_models.len()
    }
}

/// Runs the offline stage end to end.
pub fn offline_train<T: Real>(problem: &dyn FomProblem<T>, config: &RomesConfig) -> Result<OfflinePackage<T>> {
    config.validate()?;
    let inputs = OfflineInputs::generate(problem, config)?;
    offline_train_from(problem, config, &inputs)
}

/// Offline stage from precomputed FOM data. Errors carry the step index:
/// 1 trial basis, 2 out-of-plane basis, 3 dual bases, 4 training pairs, 5 GP fits.
pub fn offline_train_from<T: Real>(
    problem: &dyn FomProblem<T>,
    config: &RomesConfig,
    inputs: &OfflineInputs<T>,
) -> Result<OfflinePackage<T>> {
    config.validate()?;
    let settings = config.solver;
    let tol = T::lit(settings.tol);

    // Steps 1-2: POD of centered snapshots, split into Phi and Phi_perp.
    let metric = build_metric(problem, config.metric).map_err(|e| e.at_step(1))?;
    let snaps = inputs.pod.matrix();
    let reference = snapshot_mean(&snaps);
    let mut centered = snaps;
    for mut col in centered.column_iter_mut() {
        col -= &reference;
    }
    let basis = pod(&centered, &metric, config.n_bar()).map_err(|e| match e {
        RomError::RankDeficient { rank, .. } if rank < config.n => e.at_step(1),
        other => other.at_step(2),
    })?;
    let phi = basis.modes.columns(0, config.n).into_owned();
    let phi_perp = basis.modes.columns(config.n, config.n_perp).into_owned();
    let subspaces = SubspaceSet::new(phi, phi_perp, metric, reference).map_err(|e| e.at_step(2))?;
    log::info!(
        "trial basis n = {}, out-of-plane n_perp = {}, N = {}",
        config.n,
        config.n_perp,
        problem.dimension()
    );

    // Step 3: dual bases.
    let dual_snaps = dual_snapshots(problem, &subspaces, &inputs.dual_params, config.projection, tol, settings.max_iters)
        .map_err(|e| e.at_step(3))?;
    let dual_basis = dual_basis_from_snapshots(&dual_snaps, config.dual_mode, config.n_p).map_err(|e| e.at_step(3))?;

    // Step 4: indicator / error-coordinate pairs.
    let n_bar = subspaces.n_bar();
    let count = inputs.romes.len();
    let mut features = DMatrix::zeros(count, n_bar);
    let mut responses = DMatrix::zeros(count, n_bar);
    for (k, (mu, u)) in inputs.romes.params.iter().zip(&inputs.romes.states).enumerate() {
        let run = indicator_run(problem, &subspaces, &dual_basis, mu, config).map_err(|e| e.at_step(4))?;
        let delta = subspaces
            .error_generalized_coordinates(u, &run.rom.reconstructed)
            .map_err(|e| e.at_step(4))?
            .concatenated();
        features.set_row(k, &run.rho.transpose());
        responses.set_row(k, &delta.transpose());
    }

    // Step 5: one GP per coordinate.
    let mut gp_models = Vec::with_capacity(n_bar);
    for i in 0..n_bar {
        let x: Vec<T> = features.column(i).iter().copied().collect();
        let y: Vec<T> = responses.column(i).iter().copied().collect();
        let grid = scaled_grid(&y, config.grid_points, &config.grid_bounds).map_err(|e| e.at_step(5))?;
        let model = cross_validate(&x, &y, &grid, config.folds, config.loss, config.seeds.cv + i as u64)
            .map_err(|e| e.at_step(5))?;
        log::debug!("coordinate {i}: {:?}, beta = {:?}", model.hyper(), model.beta());
        gp_models.push(model);
    }

    Ok(OfflinePackage {
        config: config.clone(),
        subspaces,
        singular_values: basis.singular_values,
        dual_basis,
        gp_models,
        training: TrainingPairs { features, responses },
        sets: TrainingSets {
            pod: inputs.pod.params.clone(),
            dual: inputs.dual_params.clone(),
            romes: inputs.romes.params.clone(),
        },
    })
}

struct IndicatorRun<T: Real> {
    rom: RomSolution<T>,
    rho: DVector<T>,
    factorizations: usize,
}

fn indicator_run<T: Real>(
    problem: &dyn FomProblem<T>,
    sub: &SubspaceSet<T>,
    dual_basis: &DualBasis<T>,
    mu: &ParameterVector<T>,
    config: &RomesConfig,
) -> Result<IndicatorRun<T>> {
    let rom = solve_rom(problem, sub, mu, config.projection, T::lit(config.solver.tol), config.solver.max_iters)?;
    if !rom.converged {
        log::warn!("ROM solve did not converge (|r| = {})", rom.residual_norm);
    }
    let duals = solve_dual_rom(problem, sub, dual_basis, &rom.reconstructed, mu, config.dual_projection)?;
    let rho = compute_indicators(problem, &duals.duals, &rom.reconstructed, mu)?;
    Ok(IndicatorRun {
        rom,
        rho,
        factorizations: duals.factorizations,
    })
}

/// Corrected state `x_ROM + Phi_bar * delta_tilde` with independent Gaussian coordinates.
#[derive(Debug, Clone)]
pub struct StatisticalStateModel<T: Real> {
    pub rom_state: DVector<T>,
    /// `Phi_bar * m`
    pub correction_mean: DVector<T>,
    pub entry_variance: DVector<T>,
    pub coordinate_means: DVector<T>,
    pub coordinate_variances: DVector<T>,
    pub weighting: VarianceWeighting,
}

impl<T: Real> StatisticalStateModel<T> {
    pub fn new(
        sub: &SubspaceSet<T>,
        rom_state: DVector<T>,
        coordinate_means: DVector<T>,
        coordinate_variances: DVector<T>,
        weighting: VarianceWeighting,
    ) -> Result<Self> {
        check_len("coordinate means", sub.n_bar(), coordinate_means.len())?;
        check_len("coordinate variances", sub.n_bar(), coordinate_variances.len())?;
        check_len("ROM state", sub.state_dim(), rom_state.len())?;
        let phi_bar = sub.phi_bar();
        let correction_mean = phi_bar * &coordinate_means;
        let entry_variance = match weighting {
            VarianceWeighting::Squared => phi_bar.map(|v| v * v) * &coordinate_variances,
            VarianceWeighting::AsWritten => phi_bar * &coordinate_variances,
        };
        Ok(Self {
            rom_state,
            correction_mean,
            entry_variance,
            coordinate_means,
            coordinate_variances,
            weighting,
        })
    }

    /// `E[x_tilde] = x_ROM + Phi_bar m`
    pub fn mean(&self) -> DVector<T> {
        &self.rom_state + &self.correction_mean
    }

    /// `x_ROM + Phi m_par` (in-plane correction only).
    pub fn in_plane_mean(&self, sub: &SubspaceSet<T>) -> DVector<T> {
        &self.rom_state + sub.phi() * self.coordinate_means.rows(0, sub.n())
    }

    pub fn draw_coordinates<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> DVector<T> {
        DVector::from_fn(self.coordinate_means.len(), |j, _| {
            let z: f64 = StandardNormal.sample(rng);
            self.coordinate_means[j] + self.coordinate_variances[j].max(T::zero()).sqrt() * T::lit(z)
        })
    }
}

/// Closed-form moments of a QoI under the state model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QoiMoments<T: Real> {
    pub mean: T,
    pub variance: T,
}

/// Monte-Carlo draws of `q_tilde` (rows = samples, columns = functionals).
#[derive(Debug, Clone)]
pub struct QoiModelSample<T: Real> {
    pub samples: DMatrix<T>,
    pub rom_value: DVector<T>,
    /// Exact moments for linear and quadratic functionals.
    pub moments: Vec<Option<QoiMoments<T>>>,
}

impl<T: Real> QoiModelSample<T> {
    /// Draws of the QoI error model `q_tilde - q_ROM`.
    pub fn error_samples(&self) -> DMatrix<T> {
        let mut e = self.samples.clone();
        for mut row in e.row_iter_mut() {
            row -= &self.rom_value.transpose();
        }
        e
    }

    pub fn sample_mean(&self, j: usize) -> T {
        self.samples.column(j).mean()
    }

    /// Closed-form mean when available, otherwise the sample mean.
    pub fn expected_value(&self, j: usize) -> T {
        self.moments[j].map(|m| m.mean).unwrap_or_else(|| self.sample_mean(j))
    }
}

/// Exact mean and variance of `s(x_bar + Phi_bar z)`, `z ~ N(m, diag(v))`.
pub fn qoi_moments<T: Real>(
    functional: &QoiFunctional<T>,
    sub: &SubspaceSet<T>,
    model: &StatisticalStateModel<T>,
) -> Option<QoiMoments<T>> {
    let phi_bar = sub.phi_bar();
    let v = &model.coordinate_variances;
    let mean_state = model.mean();
    match &functional.kind {
        QoiKind::Linear(g) => {
            let gp = phi_bar.tr_mul(g);
            let variance = gp.iter().zip(v.iter()).fold(T::zero(), |a, (&c, &vj)| a + c * c * vj);
            Some(QoiMoments {
                mean: g.dot(&mean_state),
                variance,
            })
        }
        QoiKind::Quadratic(m) => {
            let mp = m * phi_bar;
            let b = phi_bar.tr_mul(&mp);
            let lin = mp.tr_mul(&mean_state);
            let n_bar = v.len();
            let mut mean = mean_state.dot(&(m * &mean_state));
            let mut variance = T::zero();
            let two = T::lit(2.0);
            for j in 0..n_bar {
                mean += v[j] * b[(j, j)];
                variance += T::lit(4.0) * v[j] * lin[j] * lin[j];
                for k in 0..n_bar {
                    variance += two * b[(j, k)] * b[(j, k)] * v[j] * v[k];
                }
            }
            Some(QoiMoments { mean, variance })
        }
        QoiKind::Custom(_) => None,
    }
}

/// Result of the online stage at one parameter.
#[derive(Debug, Clone)]
pub struct OnlinePrediction<T: Real> {
    pub rom: RomSolution<T>,
    pub indicators: DVector<T>,
    pub dual_factorizations: usize,
    pub state_model: StatisticalStateModel<T>,
    pub qoi: QoiModelSample<T>,
}

/// ROM solve, reduced duals, indicators and GP posteriors: the state model only.
pub fn predict_state<T: Real>(
    problem: &dyn FomProblem<T>,
    package: &OfflinePackage<T>,
    mu: &ParameterVector<T>,
) -> Result<(RomSolution<T>, DVector<T>, usize, StatisticalStateModel<T>)> {
    let run = indicator_run(problem, &package.subspaces, &package.dual_basis, mu, &package.config)?;
    let n_bar = package.n_bar();
    let mut means = DVector::zeros(n_bar);
    let mut vars = DVector::zeros(n_bar);
    for (i, model) in package.gp_models.iter().enumerate() {
        let (m, v) = model.posterior(run.rho[i]);
        means[i] = m;
        vars[i] = v;
    }
    let state_model = StatisticalStateModel::new(
        &package.subspaces,
        run.rom.reconstructed.clone(),
        means,
        vars,
        package.config.variance_weighting,
    )?;
    Ok((run.rom, run.rho, run.factorizations, state_model))
}

/// Online stage: state model plus `n_samples` Monte-Carlo draws of every QoI.
pub fn online_predict<T: Real>(
    problem: &dyn FomProblem<T>,
    package: &OfflinePackage<T>,
    mu: &ParameterVector<T>,
    qoi_functionals: &[QoiFunctional<T>],
    n_samples: usize,
    seed: u64,
) -> Result<OnlinePrediction<T>> {
    let (rom, indicators, dual_factorizations, state_model) = predict_state(problem, package, mu)?;
    let sub = &package.subspaces;
    let s = qoi_functionals.len();
    let mut rom_value = DVector::zeros(s);
    for (j, f) in qoi_functionals.iter().enumerate() {
        rom_value[j] = f.evaluate(&rom.reconstructed)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = DMatrix::zeros(n_samples, s);
    for k in 0..n_samples {
        let z = state_model.draw_coordinates(&mut rng);
        let state = &rom.reconstructed + sub.phi_bar() * z;
        for (j, f) in qoi_functionals.iter().enumerate() {
            samples[(k, j)] = f.evaluate(&state)?;
        }
    }
    let moments = qoi_functionals.iter().map(|f| qoi_moments(f, sub, &state_model)).collect();
    Ok(OnlinePrediction {
        rom,
        indicators,
        dual_factorizations,
        state_model,
        qoi: QoiModelSample {
            samples,
            rom_value,
            moments,
        },
    })
}
