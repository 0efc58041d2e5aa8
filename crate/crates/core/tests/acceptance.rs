//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Run with `cargo test -p romes-core --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use romes::duals::{compute_indicators, solve_dual_rom, DualBasis};
use romes::gpr::{ks_statistic, GpErrorModel, GpHyperparameters, LossKind};
use romes::problems::{solve_fom, BenchmarkKind, FomProblem};
use romes::rom::{solve_rom, Projection};
use romes::romes::{
    draw_parameters, error_metrics_with, fvu, offline_train_from, pareto_study, predict_state, validation_frequency,
    CostModel, ErrorMetrics, FomSnapshots, OfflineInputs, ParetoMethod, ParetoPoint, RomesConfig, SetSizes,
    SolverSettings,
};
use romes::subspaces::{build_metric, Metric, MetricKind, SubspaceSet};

const GRID_M: usize = 16;
const SOLVER: SolverSettings = SolverSettings {
    tol: 1e-10,
    max_iters: 50,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fom_set(problem: &dyn FomProblem<f64>, count: usize, seed: u64) -> FomSnapshots<f64> {
    let params = draw_parameters(problem.parameter_box(), count, seed);
    FomSnapshots::solve(problem, params, &SOLVER).expect("FOM test solves")
}

fn base_config(n: usize, n_perp: usize, n_p: usize, romes: usize) -> RomesConfig {
    let mut c = RomesConfig::new(n, n_perp, n_p, SetSizes { pod: 100, dual: 50, romes });
    c.solver = SOLVER;
    c
}

/// Linear-benchmark data shared by criteria 3-5.
struct LinearData {
    problem: Box<dyn FomProblem<f64>>,
    inputs: OfflineInputs<f64>,
    test: FomSnapshots<f64>,
}

impl LinearData {
    fn new() -> Self {
        let problem = BenchmarkKind::LinearDiffusion.build::<f64>(GRID_M);
        let inputs = OfflineInputs::generate(problem.as_ref(), &base_config(2, 0, 10, 400)).expect("training data");
        let test = fom_set(problem.as_ref(), 500, 1000);
        Self { problem, inputs, test }
    }

    fn with_romes(&self, count: usize) -> OfflineInputs<f64> {
        OfflineInputs {
            pod: self.inputs.pod.clone(),
            dual_params: self.inputs.dual_params.clone(),
            romes: self.inputs.romes.truncated(count),
        }
    }

    fn metrics(&self, config: &RomesConfig, romes: usize, test: usize) -> ErrorMetrics<f64> {
        let pkg = offline_train_from(self.problem.as_ref(), config, &self.with_romes(romes)).expect("offline stage");
        error_metrics_with(self.problem.as_ref(), &pkg, &self.test.truncated(test), &[]).expect("metrics")
    }
}

fn criterion_1() -> Outcome {
    let problem = BenchmarkKind::LinearDiffusion.build::<f64>(GRID_M);
    let p = problem.as_ref();
    let pod = fom_set(p, 100, 1);
    let metric = build_metric(p, MetricKind::DiscreteH1).unwrap();
    let (sub, _) = SubspaceSet::from_snapshots(&pod.matrix(), metric, 2, 0).unwrap();
    let basis = DualBasis::full(p.dimension());
    let mut worst = 0.0f64;
    for mu in draw_parameters(p.parameter_box(), 20, 2024) {
        let u = solve_fom(p, &mu, None, SOLVER.tol, SOLVER.max_iters).unwrap().values;
        let rom = solve_rom(p, &sub, &mu, Projection::Galerkin, SOLVER.tol, SOLVER.max_iters).unwrap();
        let duals = solve_dual_rom(p, &sub, &basis, &rom.reconstructed, &mu, Projection::Galerkin).unwrap();
        let rho = compute_indicators(p, &duals.duals, &rom.reconstructed, &mu).unwrap();
        let delta = sub.error_generalized_coordinates(&u, &rom.reconstructed).unwrap().concatenated();
        worst = worst.max((&rho - &delta).amax() / delta.amax());
    }
    check(worst <= 1e-8, format!("N = {}, max |rho - delta| / max |delta| = {worst:.2e}", p.dimension()))
}

fn conditioning_oracle(x: &[f64], y: &[f64], h: &GpHyperparameters<f64>, beta: [f64; 2], rho: f64) -> (f64, f64) {
    let n = x.len();
    let k = |a: f64, b: f64| h.signal_variance * (-(a - b) * (a - b) / (2.0 * h.length_scale)).exp();
    let sigma_ww = DMatrix::from_fn(n, n, |i, j| k(x[i], x[j]) + if i == j { h.noise_variance } else { 0.0 });
    let sigma_vw = DVector::from_fn(n, |i, _| k(rho, x[i]));
    let nu_w = DVector::from_fn(n, |i, _| beta[0] + beta[1] * x[i]);
    let inv = sigma_ww.lu().try_inverse().unwrap();
    let w = DVector::from_column_slice(y);
    let mean = beta[0] + beta[1] * rho + (sigma_vw.transpose() * &inv * (w - nu_w))[0];
    let var = h.signal_variance + h.noise_variance - (sigma_vw.transpose() * &inv * &sigma_vw)[0];
    (mean, var)
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(3..=20);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 0.3 - 0.8 * v + 0.5 * (2.5 * v).cos() + 0.05 * rng.random::<f64>())
            .collect();
        let h = GpHyperparameters::new(
            rng.random_range(0.01..0.5),
            rng.random_range(0.1..2.0),
            rng.random_range(0.05..1.0),
        )
        .unwrap();
        let model = GpErrorModel::fit(x.clone(), y.clone(), h).unwrap();
        for _ in 0..5 {
            let rho = rng.random_range(-3.0..3.0);
            let (m, v) = model.posterior(rho);
            let (om, ov) = conditioning_oracle(&x, &y, &h, model.beta(), rho);
            worst = worst.max((m - om).abs()).max((v - ov).abs());
        }
    }
    check(worst <= 1e-10, format!("max posterior deviation {worst:.2e} over 50 instances"))
}

fn criterion_3(data: &LinearData) -> Outcome {
    let config = base_config(2, 0, 10, 400);
    let at_400 = data.metrics(&config, 400, 500);
    let at_200 = data.metrics(&config, 200, 500);
    let f400: Vec<f64> = (0..2).map(|i| at_400.coordinates[i].fvu.unwrap_or(f64::INFINITY)).collect();
    let f200: Vec<f64> = (0..2).map(|i| at_200.coordinates[i].fvu.unwrap_or(f64::INFINITY)).collect();
    let small = f400.iter().all(|&f| f < 0.05);
    let stable = f400.iter().zip(&f200).all(|(&a, &b)| a <= 2.0 * b && b <= 2.0 * a);
    check(
        small && stable,
        format!(
            "FVU at 400: [{:.4}, {:.4}], at 200: [{:.4}, {:.4}]",
            f400[0], f400[1], f200[0], f200[1]
        ),
    )
}

fn nu_80(m: &ErrorMetrics<f64>, i: usize) -> f64 {
    m.coordinates[i]
        .frequencies
        .iter()
        .find(|(w, _)| (*w - 0.80).abs() < 1e-12)
        .map(|&(_, nu)| nu)
        .expect("0.80 level reported")
}

/// Noise range reaching below the default floor of `0.01 s`; the default grid
/// cannot produce intervals narrow enough for 80% coverage on this data.
const CALIBRATION_NOISE: [f64; 2] = [0.001, 0.025];

fn criterion_4(data: &LinearData) -> Outcome {
    let mut config = base_config(2, 0, 10, 400);
    let default_ll = data.metrics(&config, 400, 500);
    config.loss = LossKind::Interval { omega: 0.80 };
    let default_interval = data.metrics(&config, 400, 500);
    config.grid_bounds.noise = CALIBRATION_NOISE;
    let interval = data.metrics(&config, 400, 500);
    config.loss = LossKind::LogLikelihood;
    let ll = data.metrics(&config, 400, 500);
    let mut ok = true;
    let mut detail = Vec::new();
    for i in 0..2 {
        let (a, b) = (nu_80(&interval, i), nu_80(&ll, i));
        ok &= (0.70..=0.90).contains(&a) && (a - 0.80).abs() <= (b - 0.80).abs() + 0.02;
        detail.push(format!(
            "coordinate {i}: interval loss {a:.3}, log-likelihood {b:.3} (default grid: {:.3}, {:.3})",
            nu_80(&default_interval, i),
            nu_80(&default_ll, i)
        ));
    }
    check(
        ok,
        format!("nu_0.80 with noise bounds {CALIBRATION_NOISE:?} s: {}", detail.join("; ")),
    )
}

fn criterion_5(data: &LinearData) -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for n in [2, 6, 10] {
        let mut par_tilde = Vec::new();
        for n_p in [n + 2, n + 8, n + 14] {
            let mut config = base_config(n, 0, n_p, 200);
            config.metric = MetricKind::Identity;
            let m = data.metrics(&config, 200, 100);
            let ordered = m.e_x >= m.e_x_par_tilde && m.e_x_par_tilde >= m.e_x_par * (1.0 - 1e-9);
            ok &= ordered;
            if !ordered {
                detail.push(format!(
                    "n={n} n_p={n_p} unordered: e_x {:.3e}, e~par {:.3e}, e_par {:.3e}",
                    m.e_x, m.e_x_par_tilde, m.e_x_par
                ));
            }
            par_tilde.push((m.e_x, m.e_x_par_tilde, m.e_x_par));
        }
        ok &= par_tilde[2].1 <= par_tilde[0].1;
        detail.push(format!(
            "n={n}: e_x {:.3e}, e~par(n_p=n+2,n+8,n+14) {:.3e} {:.3e} {:.3e}, e_par {:.3e}",
            par_tilde[0].0, par_tilde[0].1, par_tilde[1].1, par_tilde[2].1, par_tilde[0].2
        ));
    }
    check(ok, detail.join("; "))
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    b.transpose() * &b + DMatrix::identity(n, n) * 0.5
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = [0.0f64; 5];
    for _ in 0..200 {
        let big_n = rng.random_range(6..=25);
        let snaps_count = rng.random_range(4..=big_n);
        // Centering removes one rank.
        let rank = snaps_count - 1;
        let n = rng.random_range(1..=rank);
        let n_perp = rng.random_range(0..=(rank - n).min(4));
        let snaps = DMatrix::from_fn(big_n, snaps_count, |_, _| rng.random_range(-1.0..1.0));
        let theta = random_spd(&mut rng, big_n);
        let metric = Metric::custom(theta.clone()).unwrap();
        let sub = match SubspaceSet::from_snapshots(&snaps, metric, n, n_perp) {
            Ok((s, _)) => s,
            Err(e) => return Err(format!("subspace construction failed: {e}")),
        };
        let w = random_vector(&mut rng, big_n);
        let norm2 = |v: &DVector<f64>| v.dot(&(&theta * v));
        let p = sub.project_in_plane(&w).unwrap();
        let pp = sub.project_in_plane(&p).unwrap();
        let scale = norm2(&w).sqrt();
        worst[0] = worst[0].max((&pp - &p).amax() / scale);
        let residual = &w - &p;
        worst[1] = worst[1].max((sub.phi().transpose() * (&theta * &residual)).amax() / scale);
        worst[2] = worst[2].max((norm2(&w) - norm2(&p) - norm2(&residual)).abs() / norm2(&w));
        worst[3] = worst[3].max((sub.phi().transpose() * &theta * sub.phi_perp()).amax());
        let full = sub.reconstruct(&sub.generalized_coordinates(&w).unwrap()).unwrap();
        let split = &p + sub.phi_perp() * (sub.phi_perp().transpose() * (&theta * &w));
        worst[4] = worst[4].max((&full - &split).amax() / scale);
    }
    let ok = worst.iter().all(|&e| e <= 1e-10);
    check(
        ok,
        format!(
            "idempotency {:.1e}, orthogonality {:.1e}, Pythagoras {:.1e}, Phi^T Theta Phi_perp {:.1e}, split {:.1e}",
            worst[0], worst[1], worst[2], worst[3], worst[4]
        ),
    )
}

fn criterion_7() -> Outcome {
    let problem = BenchmarkKind::NonlinearReaction.build::<f64>(GRID_M);
    let p = problem.as_ref();
    // The snapshot spectrum decays ~50x per mode, so ROM errors at n = 6 are
    // near 1e-11; a tighter tolerance keeps them above solver noise.
    let mut base = base_config(2, 0, 6, 100);
    base.metric = MetricKind::Identity;
    base.solver.tol = 1e-12;
    let inputs = OfflineInputs::generate(p, &base).expect("training data");
    let params = draw_parameters(p.parameter_box(), 50, 2000);
    let test = FomSnapshots::solve(p, params, &base.solver).expect("FOM test solves");
    // Numerical rank of the centered snapshots is 8, bounding n + n_perp.
    let n_perp = 2;
    let mut grid = Vec::new();
    for n in 2..=6 {
        grid.push(ParetoPoint {
            method: ParetoMethod::RomOnly,
            n,
            n_perp: 0,
            n_p: None,
        });
        for n_p in [n + 4, n + 10] {
            grid.push(ParetoPoint {
                method: ParetoMethod::RomesFull,
                n,
                n_perp,
                n_p: Some(n_p),
            });
        }
    }
    let study = pareto_study(p, &base, &grid, &inputs, &test).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut detail = Vec::new();
    for n in 2..=6 {
        let rom_only = study
            .records
            .iter()
            .filter(|r| r.n == n && r.method == ParetoMethod::RomOnly)
            .map(|r| r.relative_error)
            .fold(f64::INFINITY, f64::min);
        let best = study
            .records
            .iter()
            .filter(|r| r.n == n && r.method == ParetoMethod::RomesFull)
            .map(|r| r.relative_error)
            .fold(f64::INFINITY, f64::min);
        ok &= best < rom_only;
        detail.push(format!("n={n}: rom_only {rom_only:.3e}, best romes_full {best:.3e}"));
    }

    // Cost structure at one online point: Newton-multiplied primal cost, one
    // dual factorization plus n_bar back-substitutions.
    let mut config = base.clone();
    config.n = 4;
    config.n_perp = n_perp;
    config.n_p = 8;
    let pkg = offline_train_from(p, &config, &inputs).map_err(|e| e.to_string())?;
    let (rom, _, factorizations, _) = predict_state(p, &pkg, &test.params[0]).map_err(|e| e.to_string())?;
    let n_bar = pkg.n_bar();
    let step = CostModel::dual(8, n_bar + 1, config.dual_mode) - CostModel::dual(8, n_bar, config.dual_mode);
    let step2 = CostModel::dual(8, n_bar + 2, config.dual_mode) - CostModel::dual(8, n_bar + 1, config.dual_mode);
    ok &= factorizations == 1 && rom.newton_iters >= 2 && step == step2 && step == 2.0 * 64.0;
    detail.push(format!(
        "ROM Newton iterations {}, dual factorizations {factorizations}, dual cost per extra coordinate {step}",
        rom.newton_iters
    ));
    check(ok, detail.join("; "))
}

fn criterion_8() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();

    let hand = fvu(&[0.0, 1.0, 2.0], &[0.0, 1.0, 1.0]).unwrap();
    let exact = fvu(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]).unwrap();
    let mean = fvu(&[0.0, 1.0, 2.0], &[1.0, 1.0, 1.0]).unwrap();
    ok &= hand == 0.5 && exact == 0.0 && mean == 1.0;
    detail.push(format!("fvu {hand}/{exact}/{mean}"));

    let x = vec![0.0, 0.25, 0.5, 0.75, 1.0];
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let gp = |noise: f64| {
        GpErrorModel::with_beta(x.clone(), y.clone(), GpHyperparameters::new(noise, 1e-6, 0.1).unwrap(), [0.0, 2.0])
            .unwrap()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rho: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..1.0)).collect();
    let truth: Vec<f64> = rho.iter().map(|r| 2.0 * r + 5.0 * rng.random_range(-1.0..1.0)).collect();
    let infinite = validation_frequency(&gp(1e12), &rho, &truth, 0.8).unwrap();
    let zero = validation_frequency(&gp(1.0), &rho, &truth, 1e-12).unwrap();
    let unit = gp(1.0);
    let m = 10_000;
    let mut r = Vec::with_capacity(m);
    let mut t = Vec::with_capacity(m);
    for _ in 0..m {
        let rr = 3.0 + rng.random::<f64>();
        let (mu, var) = unit.posterior(rr);
        let z: f64 = StandardNormal.sample(&mut rng);
        r.push(rr);
        t.push(mu + var.sqrt() * z);
    }
    let calibrated = validation_frequency(&unit, &r, &t, 0.9).unwrap();
    ok &= infinite == 1.0 && zero == 0.0 && (calibrated - 0.9).abs() <= 0.02;
    detail.push(format!("nu infinite {infinite}, omega->0 {zero}, calibrated {calibrated:.4}"));

    let pair: f64 = ks_statistic(&[-10.0, 10.0]).unwrap();
    let single: f64 = ks_statistic(&[0.0]).unwrap();
    let z: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let draws = ks_statistic(&z).unwrap();
    ok &= (pair - 0.5).abs() <= 1e-12 && single == 0.5 && draws < 0.02;
    detail.push(format!("ks pair {pair}, single {single}, normal draws {draws:.4}"));
    check(ok, detail.join("; "))
}

fn run(id: usize, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail, ok) = match outcome {
        Ok(d) => ("PASS", d, true),
        Err(d) => ("FAIL", d, false),
    };
    println!("criterion {id}: {tag} ({secs:.1} s) {detail}");
    ok
}

fn main() {
    // `cargo test` passes harness flags such as `--list`; there is nothing to list.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut ok = true;
    ok &= run(1, criterion_1);
    ok &= run(2, criterion_2);
    let data = LinearData::new();
    ok &= run(3, || criterion_3(&data));
    ok &= run(4, || criterion_4(&data));
    ok &= run(5, || criterion_5(&data));
    ok &= run(6, criterion_6);
    ok &= run(7, criterion_7);
    ok &= run(8, criterion_8);
    if !ok {
        std::process::exit(1);
    }
}
