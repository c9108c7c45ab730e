use std::fmt;

use serde::{Deserialize, Serialize};

use super::bounds::{basin_radius, pl_bounds, predict_steps, tilde_mu};
use super::lipschitz::estimate_lipschitz;
use super::lle::{estimate_lle_along, LleOptions};
use super::AnalysisError;
use crate::model::DynamicsModel;
use crate::solvers::{initial_trajectory, Init};
use crate::trajectory::{residual, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningOptions {
    pub lle: LleOptions,
    pub lipschitz_samples: usize,
    pub lipschitz_radius: f64,
    /// Phase-one linear rate fed to the step predictor.
    pub beta: f64,
    pub chi: f64,
    /// Initial residual norm; drawn from a `uniform01` initialization when
    /// absent.
    pub r0_norm: Option<f64>,
}

impl Default for ConditioningOptions {
    fn default() -> Self {
        Self {
            lle: LleOptions::default(),
            lipschitz_samples: 200,
            lipschitz_radius: 1.0,
            beta: 0.5,
            chi: 1.0,
            r0_norm: None,
        }
    }
}

/// Predictability summary of a system along one trajectory. `a` and `b` are
/// taken as 1, so the bounds are the experiment-scale reading of the
/// burn-in inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditioningReport {
    pub lle: f64,
    pub a: f64,
    pub b: f64,
    pub sqrt_mu_lower: f64,
    pub sqrt_mu_upper: f64,
    pub tilde_mu: f64,
    pub lipschitz: f64,
    pub basin_radius: f64,
    pub predicted_steps: f64,
}

impl ConditioningReport {
    pub fn parallelizable(&self) -> bool {
        self.lle < 0.0
    }
}

impl fmt::Display for ConditioningReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "parallelizable: {} (lambda={:.6}, predicted_steps={:.2})",
            if self.parallelizable() { "yes" } else { "no" },
            self.lle,
            self.predicted_steps
        )
    }
}

pub fn conditioning_report<M: DynamicsModel + ?Sized>(
    model: &M,
    traj: &Trajectory,
    opts: &ConditioningOptions,
) -> Result<ConditioningReport, AnalysisError> {
    let t = traj.len();
    let lle = estimate_lle_along(model, traj, &opts.lle)?.lambda;
    let bounds = pl_bounds(lle, t, 1.0, 1.0);
    let mu = tilde_mu(lle, t);
    let lipschitz = estimate_lipschitz(
        model,
        traj,
        opts.lipschitz_samples,
        opts.lipschitz_radius,
        opts.lle.seed,
    )?;
    let radius = if mu > 0.0 {
        basin_radius(mu, lipschitz)?
    } else {
        0.0
    };
    let r0 = match opts.r0_norm {
        Some(r) => r,
        None => {
            let init = initial_trajectory(
                &Init::Uniform01,
                traj.s0(),
                t,
                &mut crate::rng::seeded(opts.lle.seed),
            )?;
            residual(model, &init)?.norm()
        }
    };
    let predicted_steps = if mu > 0.0 {
        predict_steps(opts.beta, opts.chi, lipschitz, mu, r0)
    } else {
        f64::INFINITY
    };
    Ok(ConditioningReport {
        lle,
        a: 1.0,
        b: 1.0,
        sqrt_mu_lower: bounds.lower,
        sqrt_mu_upper: bounds.upper,
        tilde_mu: mu,
        lipschitz,
        basin_radius: radius,
        predicted_steps,
    })
}
