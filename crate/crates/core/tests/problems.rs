use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use romes::problems::{
    evaluate_qoi, solve_fom, FomProblem, LinearDiffusion, NonlinearReaction, ParameterVector,
    QoiKind,
};

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

fn fd_check(problem: &dyn FomProblem<f64>, rng: &mut ChaCha8Rng) {
    let n = problem.dimension();
    for _ in 0..5 {
        let mu = problem.parameter_box().sample(rng);
        let w = random_vec(rng, n);
        let mut v = random_vec(rng, n);
        v /= v.norm();
        let h = 1e-6;
        let jv = problem.jacobian(&w, &mu).unwrap() * &v;
        let fd = (problem.residual(&(&w + &v * h), &mu).unwrap()
            - problem.residual(&(&w - &v * h), &mu).unwrap())
            / (2.0 * h);
        let rel = (&jv - fd).norm() / jv.norm();
        assert!(rel <= 1e-5, "{}: FD mismatch {rel}", problem.name());
    }
}

#[test]
fn jacobians_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    fd_check(&LinearDiffusion::new(6), &mut rng);
    fd_check(&NonlinearReaction::new(6), &mut rng);
}

#[test]
fn linear_benchmark_is_affine_in_state() {
    let p = LinearDiffusion::<f64>::new(6);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mu = p.parameter_box().sample(&mut rng);
    let (w1, w2) = (random_vec(&mut rng, p.dimension()), random_vec(&mut rng, p.dimension()));
    let (r1, r2) = (p.residual(&w1, &mu).unwrap(), p.residual(&w2, &mu).unwrap());
    for a in [0.0, 0.3, 1.0] {
        let r = p.residual(&(&w1 * a + &w2 * (1.0 - a)), &mu).unwrap();
        let expect = &r1 * a + &r2 * (1.0 - a);
        assert!((&r - &expect).norm() <= 1e-12 * expect.norm().max(1.0));
    }
    assert_eq!(p.residual(&DVector::zeros(p.dimension()), &mu).unwrap(), p.rhs().clone());
    assert_eq!(p.jacobian(&w1, &mu).unwrap(), p.jacobian(&w2, &mu).unwrap());
}

#[test]
fn linear_system_matrix_is_spd() {
    let p = LinearDiffusion::<f64>::new(3);
    let mu = p.parameter_box().center();
    let a = p.system_matrix(&mu);
    assert!((&a - a.transpose()).amax() <= 1e-12);
    assert!(SymmetricEigen::new(a).eigenvalues.min() > 0.0);
}

#[test]
fn linear_fom_matches_dense_lu() {
    let p = LinearDiffusion::<f64>::new(8);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..3 {
        let mu = p.parameter_box().sample(&mut rng);
        let state = solve_fom(&p, &mu, None, 1e-12, 5).unwrap();
        assert!(state.converged);
        assert_eq!(state.newton_iters, 1);
        let oracle = p.system_matrix(&mu).lu().solve(p.rhs()).unwrap();
        assert!((&state.values - &oracle).amax() <= 1e-10 * oracle.amax());
        let r = p.residual(&state.values, &mu).unwrap();
        assert!(r.norm() <= 1e-10 * p.rhs().norm());
    }
}

#[test]
fn nonlinear_residual_matches_indexwise_oracle() {
    let m = 5;
    let p = NonlinearReaction::<f64>::new(m);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mu = p.parameter_box().sample(&mut rng);
    let w = random_vec(&mut rng, p.dimension());
    let (mu1, mu2, mu3) = (mu.values()[0], mu.values()[1], mu.values()[2]);
    let k = m - 1;
    let h = 1.0 / m as f64;
    let at = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= k as isize || j >= k as isize {
            0.0
        } else {
            w[j as usize * k + i as usize]
        }
    };
    for j in 0..k as isize {
        for i in 0..k as isize {
            let lap = (4.0 * at(i, j) - at(i - 1, j) - at(i + 1, j) - at(i, j - 1) - at(i, j + 1)) / (h * h);
            let x = (i + 1) as f64 * h - 0.5;
            let y = (j + 1) as f64 * h - 0.5;
            let f = mu3 * p.bump()[j as usize * k + i as usize];
            let g = 100.0 * (-(x * x + y * y) / 0.02).exp();
            assert!((p.bump()[j as usize * k + i as usize] - g).abs() < 1e-12);
            let u = at(i, j);
            let expect = -mu1 * lap - mu2 * u * u * u + f;
            let got = p.residual(&w, &mu).unwrap()[j as usize * k + i as usize];
            assert!((got - expect).abs() < 1e-10 * expect.abs().max(1.0));
        }
    }
}

#[test]
fn nonlinear_without_cubic_term_is_linear() {
    let p = NonlinearReaction::<f64>::new(8);
    let mu = ParameterVector::new(vec![1.2, 0.0, 2.0]);
    let w = random_vec(&mut ChaCha8Rng::seed_from_u64(5), p.dimension());
    let j = p.jacobian(&w, &mu).unwrap();
    assert!((j + p.laplacian() * 1.2).amax() < 1e-12);
    let state = solve_fom(&p, &mu, None, 1e-10, 10).unwrap();
    assert!(state.converged);
    assert_eq!(state.newton_iters, 1);
}

#[test]
fn nonlinear_newton_converges_quickly_mid_box() {
    let p = NonlinearReaction::<f64>::new(16);
    let mu = p.parameter_box().center();
    let state = solve_fom(&p, &mu, None, 1e-10, 10).unwrap();
    assert!(state.converged);
    assert!(state.newton_iters <= 10);
    // The cubic term must matter: the linearized solve is far from the solution.
    let lin = ParameterVector::new(vec![mu.values()[0], 0.0, mu.values()[2]]);
    let lin_state = solve_fom(&p, &lin, None, 1e-10, 10).unwrap();
    let rel = (&state.values - &lin_state.values).norm() / state.values.norm();
    assert!(rel > 0.05, "cubic term too weak: {rel}");
    assert!(state.newton_iters >= 3);
}

#[test]
fn block_integral_matches_index_sum() {
    let p = LinearDiffusion::<f64>::new(8);
    let mu = p.parameter_box().sample(&mut ChaCha8Rng::seed_from_u64(6));
    let u = solve_fom(&p, &mu, None, 1e-12, 2).unwrap().values;
    let q = &p.qoi_functionals()[0];
    assert!(matches!(q.kind, QoiKind::Linear(_)));
    let mut direct = 0.0;
    for (k, &block) in p.node_blocks().iter().enumerate() {
        if block == 4 {
            direct += p.lumped_mass()[k] * u[k];
        }
    }
    assert!((evaluate_qoi(q, &u).unwrap() - direct).abs() < 1e-13);
    let sq = &p.qoi_functionals()[1];
    let mut direct_sq = 0.0;
    for (k, &block) in p.node_blocks().iter().enumerate() {
        if block == 4 {
            direct_sq += p.lumped_mass()[k] * u[k] * u[k];
        }
    }
    assert!((evaluate_qoi(sq, &u).unwrap() - direct_sq).abs() < 1e-13);
}

#[test]
fn dimension_mismatch_is_reported() {
    let p = LinearDiffusion::<f64>::new(4);
    let mu = p.parameter_box().center();
    assert!(p.residual(&DVector::zeros(3), &mu).is_err());
    let _ = DMatrix::<f64>::zeros(1, 1);
}
