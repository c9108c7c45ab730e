//! Property suites behind `oracle-check`. Each runs a fixed, seeded batch of
//! small cases against a dense oracle and records the worst margin, where a
//! negative margin is a violation.

use parseq_core::analysis::{
    build_full_jacobian, burn_in_constants, estimate_lipschitz, finite_time_lle,
    full_jacobian_from_blocks, jacobian_extremes, neumann_check_from_blocks, pl_bounds,
};
use parseq_core::linalg::{spectral_norm_default, svd_extremes};
use parseq_core::rng;
use parseq_core::scan::{parallel_scan, sequential_scan, DiagAffinePair};
use parseq_core::solvers::initial_trajectory;
use parseq_core::systems::{LinearTimeVarying, TanhRnn};
use parseq_core::trajectory::jacobians_along;
use parseq_core::{
    deer_solve, merit, merit_gradient, residual, sequential_rollout, AffinePair, DynamicsModel,
    Init, Mat, SolverConfig, Trajectory,
};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::experiments::SCHEMA_VERSION;

/// Slack on every dense-oracle inequality.
pub const ORACLE_SLACK: f64 = 1e-9;
pub const SCAN_REL_TOL: f64 = 1e-12;
pub const GRADIENT_REL_TOL: f64 = 1e-5;
pub const LINEAR_MERIT_TOL: f64 = 1e-12;
pub const QUADRATIC_REL_SLACK: f64 = 1e-6;

const MAX_REPORTED_FAILURES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    pub failures: usize,
    /// Smallest slack over all checked inequalities.
    pub worst_margin: f64,
    pub failed_cases: Vec<String>,
}

struct Tally {
    name: &'static str,
    cases: usize,
    failures: usize,
    worst: f64,
    failed: Vec<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            cases: 0,
            failures: 0,
            worst: f64::INFINITY,
            failed: Vec::new(),
        }
    }

    /// Records one inequality as its margin; NaN counts as a failure.
    fn check(&mut self, margin: f64, label: impl FnOnce() -> String) {
        self.worst = self.worst.min(margin);
        if !(margin >= 0.0) {
            self.failures += 1;
            if self.failed.len() < MAX_REPORTED_FAILURES {
                self.failed.push(label());
            }
        }
    }

    fn case(&mut self) {
        self.cases += 1;
    }

    fn finish(self) -> SuiteResult {
        SuiteResult {
            name: self.name.to_string(),
            passed: self.failures == 0 && self.cases > 0,
            cases: self.cases,
            failures: self.failures,
            worst_margin: if self.worst.is_nan() { f64::NEG_INFINITY } else { self.worst },
            failed_cases: self.failed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub schema_version: u32,
    pub passed: bool,
    pub suites: Vec<SuiteResult>,
}

impl OracleReport {
    pub fn suite(&self, name: &str) -> Option<&SuiteResult> {
        self.suites.iter().find(|s| s.name == name)
    }
}

fn gaussian(r: &mut rng::Rng) -> f64 {
    r.sample(StandardNormal)
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Random tanh RNN with `D <= 4`, `T <= 12` and its rollout from a random
/// start.
pub fn oracle_rnn(seed: u64, case: u64) -> (TanhRnn, Trajectory) {
    let mut r = rng::substream(seed, 1000 + case);
    let d = r.random_range(1..=4);
    let t = r.random_range(1..=12);
    let gain = r.random_range(0.3..2.5);
    let m = TanhRnn::random(d, t, gain, 0.5, seed.wrapping_mul(1_000_003).wrapping_add(case));
    let s0: Vec<f64> = (0..d).map(|_| gaussian(&mut r)).collect();
    let traj = sequential_rollout(&m, &s0, t).expect("finite rollout");
    (m, traj)
}

/// Linear system whose transitions have spectral norms drawn from
/// `[0.3, 1.5]`, so products both grow and shrink.
pub fn mixed_linear(dim: usize, horizon: usize, seed: u64) -> LinearTimeVarying {
    let mut r = rng::substream(seed, 0x11e);
    let transitions = (0..horizon)
        .map(|k| {
            let rho = r.random_range(0.3..1.5);
            LinearTimeVarying::random(dim, 1, rho, seed.wrapping_mul(10_007).wrapping_add(k as u64))
                .transition(1)
                .clone()
        })
        .collect();
    let offsets = (0..horizon * dim).map(|_| gaussian(&mut r)).collect();
    LinearTimeVarying::new(transitions, offsets)
}

/// `lower <= sigma_min(J) <= upper` with `lambda`, `a`, `b` measured from the
/// Jacobian products.
pub fn sandwich(seed: u64, n: usize) -> Result<SuiteResult, CliError> {
    let mut tally = Tally::new("sandwich");
    for case in 0..n as u64 {
        let (m, traj) = oracle_rnn(seed, case);
        let jacs = jacobians_along(&m, &traj);
        let lambda = finite_time_lle(&jacs)?;
        let c = burn_in_constants(&jacs, lambda)?;
        let (_, smin) = jacobian_extremes(&jacs)?;
        let b = pl_bounds(lambda, traj.len(), c.a, c.b);
        tally.case();
        tally.check(smin - b.lower + ORACLE_SLACK, || {
            format!("case {case}: lower {} > sigma_min {smin}", b.lower)
        });
        tally.check(b.upper - smin + ORACLE_SLACK, || {
            format!("case {case}: sigma_min {smin} > upper {}", b.upper)
        });
    }
    Ok(tally.finish())
}

/// `1 <= sigma_max(J) <= 1 + max_t ||J_t||`.
pub fn sigma_max(seed: u64, n: usize) -> Result<SuiteResult, CliError> {
    let mut tally = Tally::new("sigma_max");
    for case in 0..n as u64 {
        let (m, traj) = oracle_rnn(seed, case);
        let jacs = jacobians_along(&m, &traj);
        let (smax, _) = jacobian_extremes(&jacs)?;
        let mut rho = 0.0_f64;
        for j in jacs.iter().skip(1) {
            rho = rho.max(spectral_norm_default(j)?);
        }
        tally.case();
        tally.check(smax - 1.0 + ORACLE_SLACK, || format!("case {case}: sigma_max {smax} < 1"));
        tally.check(1.0 + rho - smax + ORACLE_SLACK, || {
            format!("case {case}: sigma_max {smax} > 1 + {rho}")
        });
    }
    Ok(tally.finish())
}

/// `|sigma_min(J(s)) - sigma_min(J(s*))| <= L ||s - s*||` for random
/// perturbations of the true trajectory, with `L` twice the analytic
/// Jacobian Lipschitz bound.
pub fn perturbation(seed: u64, n: usize) -> Result<SuiteResult, CliError> {
    let mut tally = Tally::new("perturbation");
    for case in 0..n as u64 {
        let (m, truth) = oracle_rnn(seed, case);
        let lip = 2.0 * m.lipschitz_bound();
        let (_, smin_star) = svd_extremes(&build_full_jacobian(&m, &truth)?)?;
        let mut r = rng::substream(seed, 9000 + case);
        for k in 0..5 {
            let scale: f64 = r.random_range(1e-3..0.5);
            let states: Vec<f64> = truth
                .states()
                .iter()
                .map(|x| x + scale * gaussian(&mut r))
                .collect();
            let pert = Trajectory::new(truth.s0().to_vec(), states)?;
            let (_, smin) = svd_extremes(&build_full_jacobian(&m, &pert)?)?;
            let dist = distance(pert.states(), truth.states());
            tally.case();
            tally.check(lip * dist + ORACLE_SLACK - (smin - smin_star).abs(), || {
                format!("case {case}.{k}: |{smin} - {smin_star}| > {lip} * {dist}")
            });
        }
    }
    Ok(tally.finish())
}

/// `||J^{-1}||` against the Neumann-series bound.
pub fn neumann(seed: u64, n: usize) -> Result<SuiteResult, CliError> {
    let mut tally = Tally::new("neumann");
    for case in 0..n as u64 {
        let (m, traj) = oracle_rnn(seed, case);
        let c = neumann_check_from_blocks(&jacobians_along(&m, &traj))?;
        tally.case();
        tally.check(c.bound * (1.0 + ORACLE_SLACK) - c.norm, || {
            format!("case {case}: norm {} > bound {}", c.norm, c.bound)
        });
        tally.check(c.norm * (1.0 + ORACLE_SLACK) - c.corner, || {
            format!("case {case}: corner block {} > norm {}", c.corner, c.norm)
        });
    }
    Ok(tally.finish())
}

/// DEER solves linear systems, stable and unstable, in exactly one step.
pub fn linear_one_step(seed: u64, n: usize) -> Result<SuiteResult, CliError> {
    let mut tally = Tally::new("linear_one_step");
    let mut r = rng::substream(seed, 0x1e5);
    for case in 0..n as u64 {
        let d = r.random_range(1..=8);
        let t = r.random_range(1..=2000);
        let m = if case % 4 == 3 {
            LinearTimeVarying::random(d, t.min(40), 1.3, seed.wrapping_add(case))
        } else {
            mixed_linear(d, t, seed.wrapping_add(case))
        };
        let s0: Vec<f64> = (0..d).map(|_| gaussian(&mut r)).collect();
        let cfg = SolverConfig {
            seed: case,
            init: if case % 2 == 0 { Init::Uniform01 } else { Init::StdNormal },
            tol: LINEAR_MERIT_TOL,
            ..SolverConfig::default()
        };
        let rep = deer_solve(&m, &s0, &cfg)?;
        tally.case();
        let iters = rep.iterations;
        tally.check(if iters == 1 { 0.0 } else { -1.0 }, || {
            format!("case {case} (D={d}, T={}): {iters} iterations", m.horizon())
        });
        let fm = rep.final_merit();
        tally.check(LINEAR_MERIT_TOL - fm, || format!("case {case}: final merit {fm:e}"));
    }
    Ok(tally.finish())
}

fn random_pair(r: &mut rng::Rng, d: usize, scale: f64) -> AffinePair {
    let a: Vec<f64> = (0..d * d)
        .map(|_| scale * gaussian(r) / (d as f64).sqrt())
        .collect();
    let b = (0..d).map(|_| gaussian(r)).collect();
    AffinePair::new(Mat::from_vec(d, d, a), b)
}

/// Chunked parallel scan against the sequential fold, dense and diagonal.
pub fn scan_equivalence(seed: u64, n: usize) -> Result<SuiteResult, CliError> {
    let mut tally = Tally::new("scan_equivalence");
    let mut r = rng::substream(seed, 0x5ca);
    let fixed = [1usize, 2, 1023, 4096];
    for case in 0..n {
        let t = fixed.get(case).copied().unwrap_or_else(|| r.random_range(1..600));
        let d = r.random_range(1..=4);
        let chunks = r.random_range(1..=40);
        let els: Vec<AffinePair> = (0..t).map(|_| random_pair(&mut r, d, 0.95)).collect();
        let (seq, _) = sequential_scan(&els);
        let (par, _) = parallel_scan(&els, chunks);
        tally.case();
        let e = rel_diff(&par.values, &seq.values);
        tally.check(SCAN_REL_TOL - e, || {
            format!("case {case} (T={t}, D={d}, chunks={chunks}): rel diff {e:e}")
        });
        let diag: Vec<DiagAffinePair> = els
            .iter()
            .map(|e| DiagAffinePair::new(e.a.diag(), e.b.clone()))
            .collect();
        let (dseq, _) = sequential_scan(&diag);
        let (dpar, _) = parallel_scan(&diag, chunks);
        let e = rel_diff(&dpar.values, &dseq.values);
        tally.check(SCAN_REL_TOL - e, || {
            format!("case {case} diag (T={t}, chunks={chunks}): rel diff {e:e}")
        });
    }
    Ok(tally.finish())
}

/// `merit_gradient` against central finite differences of the merit.
pub fn gradient(seed: u64, n: usize) -> Result<SuiteResult, CliError> {
    let mut tally = Tally::new("gradient");
    let h = 1e-6;
    for case in 0..n as u64 {
        let mut r = rng::substream(seed, 0x9ad + case);
        let d = r.random_range(1..=4);
        let t = r.random_range(1..=9);
        let gain = r.random_range(0.2..2.5);
        let m = TanhRnn::random(d, t, gain, 0.7, seed.wrapping_add(case));
        let s0: Vec<f64> = (0..d).map(|_| gaussian(&mut r)).collect();
        let states: Vec<f64> = (0..d * t).map(|_| gaussian(&mut r)).collect();
        let traj = Trajectory::new(s0.clone(), states.clone())?;
        let grad = merit_gradient(&m, &traj)?;
        let mut fd = Vec::with_capacity(states.len());
        for i in 0..states.len() {
            let mut up = states.clone();
            let mut dn = states.clone();
            up[i] += h;
            dn[i] -= h;
            let lu = merit(&residual(&m, &Trajectory::new(s0.clone(), up)?)?);
            let ld = merit(&residual(&m, &Trajectory::new(s0.clone(), dn)?)?);
            fd.push((lu - ld) / (2.0 * h));
        }
        tally.case();
        let e = rel_diff(&grad, &fd);
        tally.check(GRADIENT_REL_TOL - e, || {
            format!("case {case} (D={d}, T={t}): rel err {e:e}")
        });
    }
    Ok(tally.finish())
}

/// Gauss-Newton steps taken inside the basin `||r|| <= mu / L` contract
/// quadratically: `||r+|| <= L / (2 mu) ||r||^2`. `mu` is the smallest
/// squared singular value of `J` sampled along each step, `L` twice the
/// sampled Lipschitz estimate.
pub fn quadratic_basin(seed: u64, n: usize) -> Result<SuiteResult, CliError> {
    let mut tally = Tally::new("quadratic_basin");
    for case in 0..n as u64 {
        let mut r = rng::substream(seed, 500 + case);
        let d = r.random_range(1..=4);
        let t = r.random_range(2..=12);
        let m = TanhRnn::random(d, t, r.random_range(0.5..2.0), 0.5, seed.wrapping_add(case));
        let s0: Vec<f64> = (0..d).map(|_| gaussian(&mut r)).collect();
        let truth = sequential_rollout(&m, &s0, t)?;
        let lip = 2.0 * estimate_lipschitz(&m, &truth, 2000, 3.0, case)?;
        let mut iterate = initial_trajectory(&Init::StdNormal, &s0, t, &mut rng::substream(case, 1))?;
        for step in 0..30 {
            let norm = residual(&m, &iterate)?.norm();
            if norm < 1e-7 {
                break;
            }
            let cfg = SolverConfig {
                init: Init::Given(iterate.clone()),
                max_iters: Some(1),
                tol: f64::MIN_POSITIVE,
                ..SolverConfig::default()
            };
            let next = deer_solve(&m, &s0, &cfg)?.final_traj;
            let mut mu = f64::INFINITY;
            for k in 0..=10 {
                let w = k as f64 / 10.0;
                let states: Vec<f64> = iterate
                    .states()
                    .iter()
                    .zip(next.states())
                    .map(|(a, b)| (1.0 - w) * a + w * b)
                    .collect();
                let pt = Trajectory::new(s0.clone(), states)?;
                let (_, smin) = svd_extremes(&full_jacobian_from_blocks(&jacobians_along(&m, &pt))?)?;
                mu = mu.min(smin * smin);
            }
            let next_norm = residual(&m, &next)?.norm();
            if norm <= mu / lip {
                let bound = lip / (2.0 * mu) * norm * norm * (1.0 + QUADRATIC_REL_SLACK);
                tally.case();
                tally.check(bound - next_norm, || {
                    format!("case {case} step {step}: {next_norm:e} > {bound:e}")
                });
            }
            iterate = next;
        }
    }
    Ok(tally.finish())
}

/// Every suite at its default size.
pub fn run_all(seed: u64) -> Result<OracleReport, CliError> {
    let suites = vec![
        sandwich(seed, 100)?,
        sigma_max(seed, 100)?,
        perturbation(seed, 40)?,
        neumann(seed, 50)?,
        linear_one_step(seed, 20)?,
        scan_equivalence(seed, 50)?,
        gradient(seed, 50)?,
        quadratic_basin(seed, 30)?,
    ];
    for s in &suites {
        log::info!(
            "{}: {} ({} cases, worst margin {:e})",
            s.name,
            if s.passed { "pass" } else { "FAIL" },
            s.cases,
            s.worst_margin
        );
    }
    Ok(OracleReport {
        schema_version: SCHEMA_VERSION,
        passed: suites.iter().all(|s| s.passed),
        suites,
    })
}
