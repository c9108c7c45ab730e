//! Trajectory evaluators: the sequential rollout, DEER (Gauss-Newton on the
//! merit), quasi-DEER (diagonal Jacobians) and gradient descent on the merit.
//!
//! All iterative solvers share one loop: evaluate the residual, stop when
//! the merit is at or below `tol` or the cap is reached, otherwise take a
//! step. Non-finite iterates are handled by [`NanPolicy`].

mod config;

use std::fmt;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{lle_from_provider, LleOptions, MIN_LLE_STEPS};
use crate::linalg::Mat;
use crate::model::DynamicsModel;
use crate::rng;
use crate::scan::{affine_scan_with_chunks, AffinePair, DiagAffinePair};
use crate::trajectory::{
    gradient_from_residual, merit, residual_unchecked, sequential_rollout, Residual, Trajectory,
    TrajectoryError,
};

pub use config::{Init, NanPolicy, SolverConfig, DEFAULT_STEP_SIZE, DEFAULT_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sequential,
    Deer,
    QuasiDeer,
    #[serde(rename = "gd")]
    GradientDescent,
}

impl Method {
    pub const ITERATIVE: [Method; 3] = [Method::Deer, Method::QuasiDeer, Method::GradientDescent];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Sequential => "sequential",
            Method::Deer => "deer",
            Method::QuasiDeer => "quasi_deer",
            Method::GradientDescent => "gd",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequential" => Ok(Method::Sequential),
            "deer" => Ok(Method::Deer),
            "quasi_deer" | "quasi-deer" => Ok(Method::QuasiDeer),
            "gd" => Ok(Method::GradientDescent),
            other => Err(format!("unknown solver {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    #[serde(rename = "final")]
    pub final_traj: Trajectory,
    pub iterations: usize,
    /// Merit of the initialization followed by the merit after every
    /// iteration.
    pub merit_history: Vec<f64>,
    pub converged: bool,
    pub nan_resets: usize,
    /// LLE along the initialization and every iterate, aligned with
    /// `merit_history`.
    pub per_iter_lle: Option<Vec<f64>>,
    pub wall_seconds: f64,
}

impl SolverReport {
    pub fn final_merit(&self) -> f64 {
        *self
            .merit_history
            .last()
            .expect("history holds the initial merit")
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("non-finite iterate at iteration {}", .report.iterations)]
    NonFinite { report: Box<SolverReport> },
}

const INIT_STREAM: u64 = 0x1417;

/// Draws `s^(0)` for a horizon of `len`.
pub fn initial_trajectory(
    init: &Init,
    s0: &[f64],
    len: usize,
    r: &mut rng::Rng,
) -> Result<Trajectory, TrajectoryError> {
    let d = s0.len();
    let states: Vec<f64> = match init {
        Init::Zeros => vec![0.0; len * d],
        Init::Uniform01 => (0..len * d).map(|_| r.random::<f64>()).collect(),
        Init::StdNormal => (0..len * d)
            .map(|_| r.sample::<f64, _>(StandardNormal))
            .collect(),
        Init::Given(t) => {
            if t.dim() != d {
                return Err(TrajectoryError::DimensionMismatch {
                    expected: d,
                    got: t.dim(),
                });
            }
            if t.len() != len {
                return Err(TrajectoryError::BeyondHorizon {
                    requested: t.len(),
                    horizon: len,
                });
            }
            t.states().to_vec()
        }
    };
    Trajectory::new(s0.to_vec(), states)
}

/// One solver update: returns `s^(i+1)` given `s^(i)` and its residual.
/// Implementations may keep buffers across iterations.
trait Update {
    fn update<M: DynamicsModel + ?Sized>(
        &mut self,
        model: &M,
        traj: &Trajectory,
        res: &Residual,
        cfg: &SolverConfig,
    ) -> Vec<f64>;
}

#[derive(Default)]
struct DeerUpdate {
    elements: Vec<AffinePair>,
}

#[derive(Default)]
struct QuasiDeerUpdate {
    elements: Vec<DiagAffinePair>,
}

struct GradientUpdate;

impl Update for DeerUpdate {
    fn update<M: DynamicsModel + ?Sized>(
        &mut self,
        model: &M,
        traj: &Trajectory,
        res: &Residual,
        cfg: &SolverConfig,
    ) -> Vec<f64> {
        let d = traj.dim();
        if self.elements.len() != traj.len() {
            self.elements = (0..traj.len())
                .map(|_| AffinePair::new(Mat::zeros(d, d), vec![0.0; d]))
                .collect();
        }
        self.elements
            .par_iter_mut()
            .enumerate()
            .with_min_len(64)
            .for_each(|(k, e)| {
                let t = k + 1;
                model.jacobian(t, traj.state(t - 1), &mut e.a);
                for (b, r) in e.b.iter_mut().zip(res.at(t)) {
                    *b = -r;
                }
            });
        let delta = affine_scan_with_chunks(&self.elements, cfg.scan, cfg.chunks);
        traj.states()
            .iter()
            .zip(&delta.values)
            .map(|(s, ds)| s + ds)
            .collect()
    }
}

impl Update for QuasiDeerUpdate {
    fn update<M: DynamicsModel + ?Sized>(
        &mut self,
        model: &M,
        traj: &Trajectory,
        res: &Residual,
        cfg: &SolverConfig,
    ) -> Vec<f64> {
        let d = traj.dim();
        if self.elements.len() != traj.len() {
            self.elements = (0..traj.len())
                .map(|_| DiagAffinePair::new(vec![0.0; d], vec![0.0; d]))
                .collect();
        }
        self.elements
            .par_iter_mut()
            .enumerate()
            .with_min_len(64)
            .for_each(|(k, e)| {
                let t = k + 1;
                model.jacobian_diag(t, traj.state(t - 1), &mut e.a);
                for (b, r) in e.b.iter_mut().zip(res.at(t)) {
                    *b = -r;
                }
            });
        let delta = affine_scan_with_chunks(&self.elements, cfg.scan, cfg.chunks);
        traj.states()
            .iter()
            .zip(&delta.values)
            .map(|(s, ds)| s + ds)
            .collect()
    }
}

impl Update for GradientUpdate {
    fn update<M: DynamicsModel + ?Sized>(
        &mut self,
        model: &M,
        traj: &Trajectory,
        res: &Residual,
        cfg: &SolverConfig,
    ) -> Vec<f64> {
        let grad = gradient_from_residual(model, traj, res);
        traj.states()
            .iter()
            .zip(&grad)
            .map(|(s, g)| s - cfg.step_size * g)
            .collect()
    }
}

fn check_model<M: DynamicsModel + ?Sized>(
    model: &M,
    s0: &[f64],
    cfg: &SolverConfig,
) -> Result<(), SolveError> {
    cfg.validate().map_err(SolveError::InvalidConfig)?;
    if s0.len() != model.dim() {
        return Err(TrajectoryError::DimensionMismatch {
            expected: model.dim(),
            got: s0.len(),
        }
        .into());
    }
    if model.horizon() == 0 {
        return Err(TrajectoryError::EmptyHorizon.into());
    }
    if s0.iter().any(|x| !x.is_finite()) {
        return Err(TrajectoryError::NonFiniteInitial.into());
    }
    Ok(())
}

fn iterate_lle<M: DynamicsModel + ?Sized>(model: &M, traj: &Trajectory, seed: u64) -> f64 {
    if traj.len() < MIN_LLE_STEPS || !traj.is_finite() {
        return f64::NAN;
    }
    lle_from_provider(
        traj.len(),
        traj.dim(),
        &LleOptions::seeded(seed),
        |t, out| model.jacobian(t, traj.state(t - 1), out),
    )
    .map_or(f64::NAN, |e| e.lambda)
}

fn run<M: DynamicsModel + ?Sized, U: Update>(
    model: &M,
    s0: &[f64],
    cfg: &SolverConfig,
    mut step: U,
) -> Result<SolverReport, SolveError> {
    check_model(model, s0, cfg)?;
    let start = Instant::now();
    let len = model.horizon();
    let max_iters = cfg.max_iters.unwrap_or(len);
    let mut init_rng = rng::substream(cfg.seed, INIT_STREAM);
    let init = initial_trajectory(&cfg.init, s0, len, &mut init_rng)?;
    let mut traj = init.clone();
    let mut res = residual_unchecked(model, &traj);
    let mut current = merit(&res);
    let mut history = vec![current];
    let mut nan_resets = 0;
    let mut lles = cfg
        .track_lle
        .then(|| vec![iterate_lle(model, &traj, cfg.seed)]);
    let mut iterations = 0;

    while !(current <= cfg.tol) && iterations < max_iters {
        let mut states = step.update(model, &traj, &res, cfg);
        iterations += 1;
        if states.iter().any(|x| !x.is_finite()) {
            if cfg.nan_policy == NanPolicy::Abort {
                traj = Trajectory::new(s0.to_vec(), states)?;
                let report = SolverReport {
                    final_traj: traj,
                    iterations,
                    merit_history: {
                        history.push(f64::NAN);
                        history
                    },
                    converged: false,
                    nan_resets,
                    per_iter_lle: lles,
                    wall_seconds: start.elapsed().as_secs_f64(),
                };
                return Err(SolveError::NonFinite {
                    report: Box::new(report),
                });
            }
            nan_resets += 1;
            let fresh;
            let source = if cfg.nan_reset_same {
                &init
            } else {
                fresh = initial_trajectory(&cfg.init, s0, len, &mut init_rng)?;
                &fresh
            };
            for (x, y) in states.iter_mut().zip(source.states()) {
                if !x.is_finite() {
                    *x = *y;
                }
            }
            log::debug!("iteration {iterations}: reset non-finite entries");
        }
        traj = Trajectory::new(s0.to_vec(), states)?;
        res = residual_unchecked(model, &traj);
        current = merit(&res);
        history.push(current);
        if let Some(l) = lles.as_mut() {
            l.push(iterate_lle(model, &traj, cfg.seed));
        }
        log::trace!("iteration {iterations}: merit {current:e}");
    }

    Ok(SolverReport {
        final_traj: traj,
        iterations,
        merit_history: history,
        converged: current <= cfg.tol,
        nan_resets,
        per_iter_lle: lles,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Gauss-Newton on the merit: each iteration solves the linearized
/// recursion `ds_t = J_t ds_{t-1} - r_t` with an associative scan.
pub fn deer_solve<M: DynamicsModel + ?Sized>(
    model: &M,
    s0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverReport, SolveError> {
    run(model, s0, cfg, DeerUpdate::default())
}

/// DEER with every `J_t` replaced by its diagonal.
pub fn quasi_deer_solve<M: DynamicsModel + ?Sized>(
    model: &M,
    s0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverReport, SolveError> {
    run(model, s0, cfg, QuasiDeerUpdate::default())
}

/// Fixed-step gradient descent `s <- s - alpha * grad L(s)`.
pub fn gd_solve<M: DynamicsModel + ?Sized>(
    model: &M,
    s0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverReport, SolveError> {
    run(model, s0, cfg, GradientUpdate)
}

/// The sequential rollout wrapped in a report (zero iterations, merit 0).
pub fn sequential_solve<M: DynamicsModel + ?Sized>(
    model: &M,
    s0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverReport, SolveError> {
    check_model(model, s0, cfg)?;
    let start = Instant::now();
    let traj = sequential_rollout(model, s0, model.horizon())?;
    let m = merit(&residual_unchecked(model, &traj));
    Ok(SolverReport {
        final_traj: traj,
        iterations: 0,
        merit_history: vec![m],
        converged: m <= cfg.tol,
        nan_resets: 0,
        per_iter_lle: None,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn solve<M: DynamicsModel + ?Sized>(
    method: Method,
    model: &M,
    s0: &[f64],
    cfg: &SolverConfig,
) -> Result<SolverReport, SolveError> {
    match method {
        Method::Sequential => sequential_solve(model, s0, cfg),
        Method::Deer => deer_solve(model, s0, cfg),
        Method::QuasiDeer => quasi_deer_solve(model, s0, cfg),
        Method::GradientDescent => gd_solve(model, s0, cfg),
    }
}
