use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Below this `|lambda|` the bounds use their `lambda -> 0` limits.
pub const LAMBDA_ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlBounds {
    pub lower: f64,
    pub upper: f64,
}

/// `(e^lambda - 1) / (e^{lambda T} - 1)`, evaluated without overflow.
fn geometric_ratio(lambda: f64, t: usize) -> f64 {
    let t = t as f64;
    if lambda.abs() < LAMBDA_ZERO_TOL {
        return 1.0 / t;
    }
    if lambda < 0.0 {
        // both numerator and denominator are in (-1, 0)
        return lambda.exp_m1() / (lambda * t).exp_m1();
    }
    // e^{lambda (1 - T)} * (1 - e^{-lambda}) / (1 - e^{-lambda T})
    (lambda * (1.0 - t)).exp() * (-lambda).exp_m1() / (-lambda * t).exp_m1()
}

/// Bounds on `sqrt(mu) = inf sigma_min(J)` for a system with largest
/// Lyapunov exponent `lambda` and burn-in constants `a >= 1 >= b > 0`:
///
/// `lower = (1/a) (e^lambda - 1) / (e^{lambda T} - 1)`,
/// `upper = (1/b) e^{-lambda (T - 1)}`.
pub fn pl_bounds(lambda: f64, t: usize, a: f64, b: f64) -> PlBounds {
    assert!(t >= 1, "T must be positive");
    let upper = if lambda.abs() < LAMBDA_ZERO_TOL {
        1.0 / b
    } else {
        (-lambda * (t as f64 - 1.0)).exp() / b
    };
    PlBounds {
        lower: geometric_ratio(lambda, t) / a,
        upper,
    }
}

/// `((e^lambda - 1) / (e^{lambda T} - 1))^2`: the squared lower bound with
/// `a = 1`.
pub fn tilde_mu(lambda: f64, t: usize) -> f64 {
    let r = geometric_ratio(lambda, t);
    r * r
}

/// Radius `mu / L` of the residual ball in which Gauss-Newton converges
/// quadratically. Infinite when `L = 0`.
pub fn basin_radius(mu: f64, lipschitz: f64) -> Result<f64, AnalysisError> {
    if !(mu > 0.0) {
        return Err(AnalysisError::NonPositiveMu(mu));
    }
    if lipschitz < 0.0 || lipschitz.is_nan() {
        return Err(AnalysisError::InvalidArgument(format!(
            "Lipschitz constant must be nonnegative, got {lipschitz}"
        )));
    }
    if lipschitz == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(mu / lipschitz)
}

/// `basin_radius` with `mu` replaced by its lower bound in terms of
/// `lambda`: `(1/(a^2 L)) ((e^lambda - 1)/(e^{lambda T} - 1))^2`.
pub fn basin_radius_from_lle(
    lambda: f64,
    t: usize,
    a: f64,
    lipschitz: f64,
) -> Result<f64, AnalysisError> {
    let lower = pl_bounds(lambda, t, a, 1.0).lower;
    basin_radius(lower * lower, lipschitz)
}

/// Two-phase step count `log(chi L ||r0|| / mu) / log(1/beta)`: linear
/// convergence at rate `beta` until the residual enters the basin, then a
/// handful of quadratic steps (not counted). Clamped at zero when the start
/// is already inside the basin.
pub fn predict_steps(beta: f64, chi: f64, lipschitz: f64, mu: f64, r0_norm: f64) -> f64 {
    assert!(beta > 0.0 && beta < 1.0, "beta must lie in (0, 1)");
    let arg = chi * lipschitz * r0_norm / mu;
    if !(arg > 1.0) {
        return 0.0;
    }
    arg.ln() / (1.0 / beta).ln()
}

/// Linear convergence rate fitted to the phase-one part of a merit history.
///
/// Residual norms `sqrt(2 L_i)` are fitted by least squares in log space
/// over the iterations before the residual first drops below `stop_norm`
/// (or over the whole history). Returns `None` with fewer than two usable
/// points or a non-contracting fit.
pub fn fit_linear_rate(merit_history: &[f64], stop_norm: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = merit_history
        .iter()
        .map(|m| (2.0 * m).sqrt())
        .take_while(|n| n.is_finite() && *n > stop_norm)
        .enumerate()
        .map(|(i, n)| (i as f64, n.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let beta = (sxy / sxx).exp();
    (beta > 0.0 && beta < 1.0).then_some(beta)
}
