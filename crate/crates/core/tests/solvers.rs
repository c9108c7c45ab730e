use parseq_core::analysis::stats::{median, spearman};
use parseq_core::analysis::{conditioning_report, estimate_lle_along, ConditioningOptions, LleOptions};
use parseq_core::rng;
use parseq_core::systems::{mean_field_rnn, LinearTimeVarying};
use parseq_core::{
    deer_solve, gd_solve, quasi_deer_solve, sequential_rollout, sequential_solve, solve, DynamicsModel, Init, Mat,
    Method, NanPolicy, SolveError, SolverConfig, SolverReport,
};
use rand::Rng;
use rand_distr::StandardNormal;

/// Transitions with spectral norms drawn from [0.3, 1.5]: individually
/// stable and unstable, bounded on average.
fn mixed_linear(dim: usize, horizon: usize, seed: u64) -> LinearTimeVarying {
    let mut r = rng::seeded(seed);
    let transitions = (0..horizon)
        .map(|k| {
            let rho = r.random_range(0.3..1.5);
            LinearTimeVarying::random(dim, 1, rho, seed * 10_007 + k as u64).transition(1).clone()
        })
        .collect();
    let offsets = (0..horizon * dim).map(|_| r.sample(StandardNormal)).collect();
    LinearTimeVarying::new(transitions, offsets)
}

fn check_report(rep: &SolverReport, tol: f64) {
    assert_eq!(rep.merit_history.len(), rep.iterations + 1);
    assert_eq!(rep.converged, rep.final_merit() <= tol);
}

#[test]
fn deer_solves_linear_systems_in_one_step() {
    let mut r = rng::seeded(11);
    for case in 0..20 {
        let d = r.random_range(1..=8);
        let t = r.random_range(1..=2000);
        let m = if case % 4 == 3 {
            LinearTimeVarying::random(d, t.min(40), 1.3, case)
        } else {
            mixed_linear(d, t, case)
        };
        let s0: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
        let cfg = SolverConfig {
            seed: case,
            init: if case % 2 == 0 { Init::Uniform01 } else { Init::StdNormal },
            tol: 1e-12,
            ..SolverConfig::default()
        };
        let rep = deer_solve(&m, &s0, &cfg).unwrap();
        check_report(&rep, cfg.tol);
        assert_eq!(rep.iterations, 1, "case {case}: {:?}", rep.merit_history);
        assert!(rep.final_merit() <= 1e-12);
        let truth = sequential_rollout(&m, &s0, m.horizon()).unwrap();
        let scale = truth.states().iter().fold(1.0_f64, |a, x| a.max(x.abs()));
        assert!(rep.final_traj.max_abs_diff(&truth) <= 1e-9 * scale);
    }
}

#[test]
fn deer_matches_rollout_on_contracting_rnn() {
    let m = mean_field_rnn(20, 0.8, 1000, 0);
    let s0 = vec![0.0; 20];
    let truth = sequential_rollout(&m, &s0, 1000).unwrap();
    let cfg = SolverConfig {
        tol: 1e-10,
        ..SolverConfig::default()
    };
    let rep = deer_solve(&m, &s0, &cfg).unwrap();
    check_report(&rep, cfg.tol);
    assert!(rep.iterations <= 15);
    assert!(rep.final_traj.max_abs_diff(&truth) <= 1e-6);

    // At the default tolerance the stop comes one Newton step earlier; the
    // deviation is then bounded by the residual rather than roundoff.
    let rep = deer_solve(&m, &s0, &SolverConfig::default()).unwrap();
    assert!(rep.converged && rep.iterations <= 15);
    let res_norm = (2.0 * rep.final_merit()).sqrt();
    assert!(rep.final_traj.max_abs_diff(&truth) <= res_norm);
}

#[test]
fn converged_runs_match_rollout_for_stable_rnns() {
    let mut checked = 0;
    for (g, seed) in [(0.5, 1), (0.8, 2), (1.0, 3)] {
        let m = mean_field_rnn(20, g, 500, seed);
        let s0 = vec![0.0; 20];
        let truth = sequential_rollout(&m, &s0, 500).unwrap();
        let lambda = estimate_lle_along(&m, &truth, &LleOptions::seeded(seed)).unwrap().lambda;
        if lambda >= 0.0 {
            continue;
        }
        for method in Method::ITERATIVE {
            let cfg = SolverConfig {
                seed,
                tol: 1e-12,
                max_iters: Some(5000),
                ..SolverConfig::default()
            };
            let rep = solve(method, &m, &s0, &cfg).unwrap();
            if rep.converged {
                assert!(rep.final_traj.max_abs_diff(&truth) <= 1e-5, "{method} at g={g}");
                checked += 1;
            }
        }
    }
    assert!(checked >= 4);
}

/// `s_t = tanh(a * s_{t-1} + u_t)` coordinate-wise.
struct DiagonalTanh {
    a: Vec<f64>,
    inputs: Vec<f64>,
}

impl DynamicsModel for DiagonalTanh {
    fn dim(&self) -> usize {
        self.a.len()
    }
    fn horizon(&self) -> usize {
        self.inputs.len() / self.a.len()
    }
    fn step(&self, t: usize, s: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            out[i] = (self.a[i] * s[i] + self.inputs[(t - 1) * d + i]).tanh();
        }
    }
    fn jacobian(&self, t: usize, s: &[f64], out: &mut Mat) {
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                out[(i, j)] = 0.0;
            }
            let y = (self.a[i] * s[i] + self.inputs[(t - 1) * d + i]).tanh();
            out[(i, i)] = self.a[i] * (1.0 - y * y);
        }
    }
}

#[test]
fn quasi_deer_equals_deer_on_diagonal_dynamics() {
    let mut r = rng::seeded(4);
    let d = 5;
    let t = 400;
    let m = DiagonalTanh {
        a: (0..d).map(|_| r.random_range(-1.5..1.5)).collect(),
        inputs: (0..d * t).map(|_| r.sample(StandardNormal)).collect(),
    };
    let s0 = vec![0.2; d];
    let cfg = SolverConfig::with_seed(9);
    let a = deer_solve(&m, &s0, &cfg).unwrap();
    let b = quasi_deer_solve(&m, &s0, &cfg).unwrap();
    assert_eq!(a.iterations, b.iterations);
    for (x, y) in a.merit_history.iter().zip(&b.merit_history) {
        assert!((x - y).abs() <= 1e-12 * x.max(1.0));
    }
    assert!(a.final_traj.max_abs_diff(&b.final_traj) <= 1e-12);
    for iters in 1..a.iterations {
        let capped = SolverConfig {
            max_iters: Some(iters),
            ..cfg.clone()
        };
        let a = deer_solve(&m, &s0, &capped).unwrap();
        let b = quasi_deer_solve(&m, &s0, &capped).unwrap();
        assert!(a.final_traj.max_abs_diff(&b.final_traj) <= 1e-12);
    }
}

#[test]
fn quasi_deer_needs_more_steps_on_dense_linear() {
    let m = LinearTimeVarying::random(4, 200, 0.8, 3);
    let s0 = vec![1.0; 4];
    let cfg = SolverConfig::default();
    let deer = deer_solve(&m, &s0, &cfg).unwrap();
    let quasi = quasi_deer_solve(&m, &s0, &cfg).unwrap();
    assert_eq!(deer.iterations, 1);
    assert!(quasi.iterations > 1);
}

#[test]
fn gradient_descent_decreases_merit() {
    let m = LinearTimeVarying::new(vec![Mat::scalar(0.5); 4], vec![0.0; 4]);
    let cfg = SolverConfig {
        step_size: 0.5,
        max_iters: Some(200),
        ..SolverConfig::default()
    };
    let rep = gd_solve(&m, &[1.0], &cfg).unwrap();
    check_report(&rep, cfg.tol);
    assert!(rep.converged);
    for w in rep.merit_history.windows(2) {
        assert!(w[1] <= w[0]);
    }
}

#[test]
fn starting_at_the_truth_needs_no_iterations() {
    let m = mean_field_rnn(8, 1.5, 100, 1);
    let s0 = vec![0.3; 8];
    let truth = sequential_rollout(&m, &s0, 100).unwrap();
    let cfg = SolverConfig {
        init: Init::Given(truth.clone()),
        ..SolverConfig::default()
    };
    for method in Method::ITERATIVE {
        let rep = solve(method, &m, &s0, &cfg).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
        assert_eq!(rep.final_traj, truth);
    }
    let seq = sequential_solve(&m, &s0, &cfg).unwrap();
    assert_eq!(seq.iterations, 0);
    assert_eq!(seq.final_merit(), 0.0);
}

#[test]
fn overflow_is_reset_or_aborted() {
    // DEER's first step lands on the exact solution 10^t, which overflows.
    let t = 400;
    let m = LinearTimeVarying::new(vec![Mat::scalar(10.0); t], vec![0.0; t]);
    let cfg = SolverConfig {
        max_iters: Some(5),
        ..SolverConfig::default()
    };
    let rep = deer_solve(&m, &[1.0], &cfg).unwrap();
    assert!(rep.nan_resets > 0);
    assert!(!rep.converged);
    assert!(rep.final_traj.is_finite());
    check_report(&rep, cfg.tol);

    let same = SolverConfig {
        nan_reset_same: true,
        ..cfg.clone()
    };
    let rep = deer_solve(&m, &[1.0], &same).unwrap();
    assert!(rep.nan_resets > 0 && rep.final_traj.is_finite());

    let abort = SolverConfig {
        nan_policy: NanPolicy::Abort,
        ..cfg
    };
    match deer_solve(&m, &[1.0], &abort) {
        Err(SolveError::NonFinite { report }) => {
            assert_eq!(report.iterations, 1);
            assert!(report.final_merit().is_nan());
        }
        other => panic!("expected abort, got {other:?}"),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let m = mean_field_rnn(3, 0.5, 10, 0);
    for cfg in [
        SolverConfig {
            tol: 0.0,
            ..SolverConfig::default()
        },
        SolverConfig {
            max_iters: Some(0),
            ..SolverConfig::default()
        },
        SolverConfig {
            step_size: -1.0,
            ..SolverConfig::default()
        },
    ] {
        assert!(matches!(deer_solve(&m, &[0.0; 3], &cfg), Err(SolveError::InvalidConfig(_))));
    }
    assert!(matches!(
        deer_solve(&m, &[0.0; 2], &SolverConfig::default()),
        Err(SolveError::Trajectory(_))
    ));
}

#[test]
fn reports_are_deterministic_and_roundtrip() {
    let m = mean_field_rnn(6, 1.2, 80, 5);
    let cfg = SolverConfig {
        seed: 17,
        track_lle: true,
        ..SolverConfig::default()
    };
    let a = deer_solve(&m, &[0.0; 6], &cfg).unwrap();
    let b = deer_solve(&m, &[0.0; 6], &cfg).unwrap();
    assert_eq!(a.final_traj, b.final_traj);
    assert_eq!(a.merit_history, b.merit_history);
    assert_eq!(a.per_iter_lle.as_ref().unwrap().len(), a.iterations + 1);
    let json = serde_json::to_string(&a).unwrap();
    assert!(json.contains("\"final\""));
    let back: SolverReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, a);
    let cfg_json = serde_json::to_string(&cfg).unwrap();
    let cfg_back: SolverConfig = serde_json::from_str(&cfg_json).unwrap();
    assert_eq!(cfg_back, cfg);
    let partial: SolverConfig = serde_json::from_str(r#"{"init": "std_normal", "seed": 3}"#).unwrap();
    assert_eq!(partial.init, Init::StdNormal);
    assert_eq!(partial.tol, 1e-7);
}

#[test]
fn scan_modes_give_the_same_solution() {
    let m = mean_field_rnn(10, 1.1, 700, 2);
    let s0 = vec![0.0; 10];
    let seq = SolverConfig {
        scan: parseq_core::ScanMode::Sequential,
        ..SolverConfig::default()
    };
    let par = SolverConfig {
        chunks: Some(7),
        ..SolverConfig::default()
    };
    let a = deer_solve(&m, &s0, &seq).unwrap();
    let b = deer_solve(&m, &s0, &par).unwrap();
    assert_eq!(a.iterations, b.iterations);
    assert!(a.final_traj.max_abs_diff(&b.final_traj) <= 1e-9);
}

const RNN_GRID: [f64; 6] = [0.5, 0.7, 0.9, 1.1, 1.3, 1.5];

#[test]
fn quasi_deer_never_beats_deer_on_rnn_grid() {
    for &g in &RNN_GRID {
        for seed in 0..3 {
            let m = mean_field_rnn(30, g, 200, seed);
            let s0 = vec![0.0; 30];
            let cfg = SolverConfig::with_seed(seed);
            let deer = deer_solve(&m, &s0, &cfg).unwrap();
            let quasi = quasi_deer_solve(&m, &s0, &cfg).unwrap();
            assert!(quasi.iterations >= deer.iterations, "g={g} seed={seed}");
        }
    }
}

#[test]
fn predicted_steps_track_deer_steps() {
    let t = 300;
    let mut predicted = Vec::new();
    let mut measured = Vec::new();
    for &g in &RNN_GRID {
        let m = mean_field_rnn(50, g, t, 0);
        let s0 = vec![0.0; 50];
        let truth = sequential_rollout(&m, &s0, t).unwrap();
        let rep = conditioning_report(&m, &truth, &ConditioningOptions::default()).unwrap();
        predicted.push(rep.predicted_steps);
        measured.push(deer_solve(&m, &s0, &SolverConfig::default()).unwrap().iterations as f64);
    }
    let rho = spearman(&predicted, &measured);
    assert!(rho > 0.8, "rank correlation {rho}: {predicted:?} vs {measured:?}");
}

const GD_STEP_SIZES: [f64; 9] = [0.01, 0.1, 0.25, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

fn best_gd_steps<M: DynamicsModel>(m: &M, s0: &[f64], tol: f64, cap: usize) -> Option<usize> {
    GD_STEP_SIZES
        .iter()
        .filter_map(|&alpha| {
            let cfg = SolverConfig {
                tol,
                step_size: alpha,
                max_iters: Some(cap),
                nan_policy: NanPolicy::Abort,
                ..SolverConfig::default()
            };
            gd_solve(m, s0, &cfg).ok().filter(|r| r.converged).map(|r| r.iterations)
        })
        .min()
}

#[test]
fn gradient_descent_slows_with_lle() {
    let t = 50;
    let mut lambdas = Vec::new();
    let mut steps = Vec::new();
    for &g in &RNN_GRID[..4] {
        let m = mean_field_rnn(50, g, t, 0);
        let s0 = vec![0.0; 50];
        let truth = sequential_rollout(&m, &s0, t).unwrap();
        lambdas.push(estimate_lle_along(&m, &truth, &LleOptions::default()).unwrap().lambda);
        let best = best_gd_steps(&m, &s0, 0.1, 3000).expect("some step size converges");
        steps.push(best as f64);
    }
    let rho = spearman(&lambdas, &steps);
    assert!(rho > 0.8, "rank correlation {rho}: {lambdas:?} vs {steps:?}");
}

#[test]
fn solver_strength_orders_iteration_counts() {
    let t = 50;
    for &g in &[0.5, 0.8] {
        let mut counts = [Vec::new(), Vec::new(), Vec::new()];
        for seed in 0..3 {
            let m = mean_field_rnn(20, g, t, seed);
            let s0 = vec![0.0; 20];
            let cfg = SolverConfig::with_seed(seed);
            counts[0].push(deer_solve(&m, &s0, &cfg).unwrap().iterations as f64);
            counts[1].push(quasi_deer_solve(&m, &s0, &cfg).unwrap().iterations as f64);
            counts[2].push(best_gd_steps(&m, &s0, cfg.tol, 3000).unwrap_or(3000) as f64);
        }
        let med: Vec<f64> = counts.iter().map(|c| median(c)).collect();
        assert!(med[0] <= med[1] && med[1] <= med[2], "g={g}: {med:?}");
    }
}

#[test]
fn init_draws_follow_their_distribution() {
    let s0 = [0.0; 4];
    let mut r = rng::substream(1, 2);
    let init = parseq_core::solvers::initial_trajectory(&Init::Uniform01, &s0, 5000, &mut r).unwrap();
    assert!(init.states().iter().all(|x| (0.0..1.0).contains(x)));
    let normal = parseq_core::solvers::initial_trajectory(&Init::StdNormal, &s0, 5000, &mut r).unwrap();
    let mean = normal.states().iter().sum::<f64>() / 20_000.0;
    assert!(mean.abs() < 0.05);
}
