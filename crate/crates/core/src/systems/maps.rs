//! Maps with known Lyapunov exponents, used to validate the estimator.

use crate::linalg::Mat;
use crate::model::DynamicsModel;
use crate::trajectory::{jacobians_along, sequential_rollout, TrajectoryError};

/// `x_t = r x_{t-1} (1 - x_{t-1})`.
#[derive(Debug, Clone, Copy)]
pub struct LogisticMap {
    pub r: f64,
    pub horizon: usize,
}

impl DynamicsModel for LogisticMap {
    fn dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn step(&self, _t: usize, s: &[f64], out: &mut [f64]) {
        out[0] = self.r * s[0] * (1.0 - s[0]);
    }

    fn jacobian(&self, _t: usize, s: &[f64], out: &mut Mat) {
        out[(0, 0)] = self.r * (1.0 - 2.0 * s[0]);
    }
}

/// `(x, y) -> (1 - a x^2 + y, b x)`.
#[derive(Debug, Clone, Copy)]
pub struct HenonMap {
    pub a: f64,
    pub b: f64,
    pub horizon: usize,
}

impl HenonMap {
    pub fn classic(horizon: usize) -> Self {
        Self {
            a: 1.4,
            b: 0.3,
            horizon,
        }
    }
}

impl DynamicsModel for HenonMap {
    fn dim(&self) -> usize {
        2
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn step(&self, _t: usize, s: &[f64], out: &mut [f64]) {
        out[0] = 1.0 - self.a * s[0] * s[0] + s[1];
        out[1] = self.b * s[0];
    }

    fn jacobian(&self, _t: usize, s: &[f64], out: &mut Mat) {
        out[(0, 0)] = -2.0 * self.a * s[0];
        out[(0, 1)] = 1.0;
        out[(1, 0)] = self.b;
        out[(1, 1)] = 0.0;
    }
}

/// Jacobians along a logistic orbit started at `x0`.
pub fn logistic_jacobians(r: f64, x0: f64, len: usize) -> Result<Vec<Mat>, TrajectoryError> {
    let m = LogisticMap { r, horizon: len };
    let orbit = sequential_rollout(&m, &[x0], len)?;
    Ok(jacobians_along(&m, &orbit))
}

/// Jacobians along a Henon orbit started at `s0`.
pub fn henon_jacobians(
    a: f64,
    b: f64,
    s0: [f64; 2],
    len: usize,
) -> Result<Vec<Mat>, TrajectoryError> {
    let m = HenonMap { a, b, horizon: len };
    let orbit = sequential_rollout(&m, &s0, len)?;
    Ok(jacobians_along(&m, &orbit))
}
