use bsgd::forward::{build_benchmark, BenchmarkSpec, ForwardProblem};
use bsgd::geometry::{duality_map, GridVector};
use bsgd::noise::{add_gaussian, noise_level};
use bsgd::random::{stream_rng, Stream};
use bsgd::rates::{bregman_increases, descent_margin_audit, noisy_perturbation_violations, AuditConstants};
use bsgd::solver::{
    check_step_admissibility, omega_for_noise_term, run_landweber, run_sgd, stochastic_gradient, ExponentMode,
    IterativeSolver, Landweber, NoisyRunParams, RecordEvery, ScheduleSpec, SolverConfig, StepContext,
};

fn benchmark(dim: usize, lo: f64, hi: f64, batch: usize) -> ForwardProblem {
    build_benchmark(&BenchmarkSpec::linear(dim, lo, hi), batch).unwrap()
}

#[test]
fn block_gradients_average_to_the_full_gradient() {
    let mut spec = BenchmarkSpec::linear(12, 0.5, 2.0);
    spec.beta = 0.1;
    let problem = build_benchmark(&spec, 3).unwrap();
    let x = GridVector::from_vec((0..12).map(|j| (j as f64 * 0.4).cos()).collect()).unwrap();
    let y = add_gaussian(problem.exact_data(), 0.1, 2);
    for (q, r_y) in [(2.0, 2.0), (1.5, 1.5), (3.0, 3.0)] {
        let n = problem.n_blocks();
        let mut mean = stochastic_gradient(&problem, &x, &y, 0, q, r_y).unwrap();
        for i in 1..n {
            mean = mean.add_scaled(1.0, &stochastic_gradient(&problem, &x, &y, i, q, r_y).unwrap()).unwrap();
        }
        let mean = mean.scaled(1.0 / n as f64);
        let mut rng = stream_rng(0, Stream::BlockSampling);
        let mut ctx = StepContext {
            problem: &problem,
            y_obs: &y,
            y_geometry: bsgd::GeometryParams::new(r_y, q).unwrap(),
            rng: &mut rng,
        };
        let full = Landweber.direction(&mut ctx, &x).unwrap().gradient;
        for (a, b) in mean.values().iter().zip(full.values()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}

#[test]
fn landweber_matches_a_euclidean_loop() {
    let problem = benchmark(8, 0.5, 1.5, 2);
    let a = BenchmarkSpec::linear(8, 0.5, 1.5).coefficients();
    let y = add_gaussian(problem.exact_data(), 0.05, 1);
    let mut config = SolverConfig::hilbert(0.3);
    config.max_epochs = 50;
    config.record = RecordEvery::Final;
    let out = run_landweber(&problem, &y, &config).unwrap();

    let n = problem.n_blocks();
    let mut y_full = [0.0; 8];
    for (i, block) in problem.batches().iter().enumerate() {
        for (k, &j) in block.iter().enumerate() {
            y_full[j] = y[i].values()[k];
        }
    }
    let mut x = vec![0.0; 8];
    for _ in 0..50 {
        let g: Vec<f64> = (0..8).map(|j| a[j] * (a[j] * x[j] - y_full[j]) / n as f64).collect();
        for j in 0..8 {
            x[j] -= 0.3 * g[j];
        }
    }
    for (u, v) in out.final_iterate.values().iter().zip(&x) {
        assert!((u - v).abs() < 1e-12);
    }
}

#[test]
fn dual_state_is_the_duality_map_of_the_iterate() {
    let problem = benchmark(10, 0.5, 1.5, 2);
    for (mode, r_x, r_y, mu) in [
        (ExponentMode::Practice, 1.5, 1.5, 0.05),
        (ExponentMode::Theory, 3.0, 2.0, 0.05),
        (ExponentMode::Practice, 1.1, 2.0, 0.05),
    ] {
        for epochs in [1, 7, 40] {
            let mut config = SolverConfig::new(mode, r_x, r_y, ScheduleSpec::constant(mu));
            config.max_epochs = epochs;
            let out = run_sgd(&problem, problem.exact_data(), &config).unwrap().into_result().unwrap();
            let j = duality_map(&out.final_iterate, &config.x_geometry().unwrap());
            let scale = j.norm(2.0).max(1e-300);
            assert!(j.sub(&out.dual_state).unwrap().norm(2.0) <= 1e-9 * scale, "r_x={r_x} epochs={epochs}");
        }
    }
}

#[test]
fn noisy_benchmark_shows_semi_convergence() {
    let problem = benchmark(20, 0.01, 1.0, 4);
    let y = add_gaussian(problem.exact_data(), 0.05, 1);
    let mut config = SolverConfig::hilbert(1.0);
    config.max_epochs = 3000;
    let out = run_sgd(&problem, &y, &config).unwrap();
    let errors: Vec<f64> = out.history.iter().map(|r| r.rel_l2_err.unwrap()).collect();
    let argmin = errors.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert!(argmin > 1 && argmin < errors.len() - 1, "argmin {argmin} of {}", errors.len());
    assert!(errors[errors.len() - 1] > 1.2 * errors[argmin]);
}

#[test]
fn noisy_steps_stay_within_the_perturbation_allowance() {
    let problem = benchmark(10, 1.0, 2.0, 2);
    let bounds = problem.bounds();
    let (gamma, l_max) = (bounds.gamma.unwrap(), bounds.l_max.unwrap());
    let mu = 0.2;
    let m0 = check_step_admissibility(&[mu], gamma, l_max, 1.0, 2.0, None).unwrap().margin;
    let omega = omega_for_noise_term(0.5 * m0, 2.0);
    assert!(check_step_admissibility(&[mu], gamma, l_max, 1.0, 2.0, Some(omega)).unwrap().admissible);
    for seed in 0..5 {
        let y = add_gaussian(problem.exact_data(), 0.05, seed);
        let delta = noise_level(problem.exact_data(), &y, 2.0).unwrap().1;
        let mut config = SolverConfig::hilbert(mu);
        config.seed = seed;
        config.max_epochs = 60;
        config.record = RecordEvery::Iteration;
        let out = run_sgd(&problem, &y, &config).unwrap();
        let d0 = out.history[0].bregman.unwrap();
        let params = NoisyRunParams::new(delta, 1.0, omega, d0, gamma, 2.0).unwrap();
        let bad = noisy_perturbation_violations(&out.history, &params, gamma, 2.0, 1e-9).unwrap();
        assert!(bad.is_empty(), "seed {seed}: {bad:?}");
    }
}

#[test]
fn decaying_steps_drive_the_average_distance_down() {
    let problem = benchmark(10, 1.0, 2.0, 2);
    let mut finals = 0.0;
    let mut d0 = 0.0;
    for seed in 0..10 {
        let mut config = SolverConfig::new(ExponentMode::Theory, 2.0, 2.0, ScheduleSpec::power(0.5, 0.5));
        config.seed = seed;
        config.max_epochs = 1000;
        config.record = RecordEvery::Final;
        let out = run_sgd(&problem, problem.exact_data(), &config).unwrap();
        d0 += out.history[0].bregman.unwrap();
        finals += out.history.last().unwrap().bregman.unwrap();
    }
    assert!(finals < 0.01 * d0, "{finals} vs {d0}");
}

#[test]
fn audits_are_pure_functions_of_the_history() {
    let problem = benchmark(10, 1.0, 2.0, 2);
    let mut config = SolverConfig::hilbert(0.25);
    config.max_epochs = 30;
    config.record = RecordEvery::Iteration;
    let out = run_sgd(&problem, problem.exact_data(), &config).unwrap();
    let before = out.history.clone();
    let c = AuditConstants {
        gamma: 0.0,
        l_max: problem.bounds().l_max.unwrap(),
        g_pstar: 1.0,
        p: 2.0,
        p_star: 2.0,
    };
    let a = descent_margin_audit(&out.history, &c, 1e-10).unwrap();
    let b = descent_margin_audit(&out.history, &c, 1e-10).unwrap();
    assert_eq!(out.history, before);
    assert!(a.steps.iter().zip(&b.steps).all(|(s, t)| s.slack.to_bits() == t.slack.to_bits()));
    assert!(a.violations.is_empty());
    assert!(bregman_increases(&out.history, 1e-10).unwrap().is_empty());
}
