//! Parallel evaluation of nonlinear state space models.
//!
//! A trajectory `s_1..s_T` of `s_t = f_t(s_{t-1})` is the unique zero of the
//! residual `r_t = s_t - f_t(s_{t-1})`. DEER minimizes `0.5 ||r||^2` by
//! Gauss-Newton; every step is a linear time-varying recursion solved with
//! an associative scan. Whether that converges quickly is governed by the
//! largest Lyapunov exponent of the dynamics, which [`analysis`] estimates
//! together with the conditioning of the problem.

pub mod analysis;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod scan;
pub mod solvers;
pub mod systems;
pub mod trajectory;

pub use analysis::{AnalysisError, ConditioningReport};
pub use linalg::{LinalgError, Mat};
pub use model::DynamicsModel;
pub use scan::{affine_scan, combine, AffinePair, ScanMode};
pub use solvers::{
    deer_solve, gd_solve, quasi_deer_solve, sequential_solve, solve, Init, Method, NanPolicy,
    SolveError, SolverConfig, SolverReport,
};
pub use trajectory::{
    merit, merit_gradient, residual, sequential_rollout, Residual, Trajectory, TrajectoryError,
};
