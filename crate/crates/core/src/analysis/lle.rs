use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::linalg::{norm2, Mat};
use crate::model::DynamicsModel;
use crate::rng;
use crate::trajectory::Trajectory;

/// Shortest Jacobian sequence the estimator accepts.
pub const MIN_LLE_STEPS: usize = 10;
pub const DEFAULT_LLE_VECTORS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LleOptions {
    pub n_vectors: usize,
    pub seed: u64,
    /// Exclude the first `min(100, T/10)` log-stretches from the average.
    pub burn_in: bool,
}

impl Default for LleOptions {
    fn default() -> Self {
        Self {
            n_vectors: DEFAULT_LLE_VECTORS,
            seed: 0,
            burn_in: true,
        }
    }
}

impl LleOptions {
    pub fn seeded(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LleEstimate {
    /// Mean over the start vectors.
    pub lambda: f64,
    pub per_vector: Vec<f64>,
}

pub fn burn_in_steps(len: usize) -> usize {
    (len / 10).min(100)
}

/// Largest Lyapunov exponent of a Jacobian sequence: propagate a random unit
/// vector, accumulate the log of each step's stretch, renormalize, and
/// average. Repeated for `n_vectors` seeded starts; the mean is returned.
///
/// A vector that is annihilated (zero stretch) makes the estimate `-inf`.
pub fn estimate_lle(jacobians: &[Mat], n_vectors: usize, seed: u64) -> Result<f64, AnalysisError> {
    let opts = LleOptions {
        n_vectors,
        seed,
        ..LleOptions::default()
    };
    Ok(estimate_lle_with(jacobians, &opts)?.lambda)
}

pub fn estimate_lle_with(
    jacobians: &[Mat],
    opts: &LleOptions,
) -> Result<LleEstimate, AnalysisError> {
    let dim = jacobians.first().map_or(0, Mat::rows);
    lle_from_provider(jacobians.len(), dim, opts, |t, out| {
        out.as_mut_slice()
            .copy_from_slice(jacobians[t - 1].as_slice())
    })
}

/// Estimate along a trajectory of `model`, evaluating `J_t(s_{t-1})` on the
/// fly instead of storing all `T` Jacobians.
pub fn estimate_lle_along<M: DynamicsModel + ?Sized>(
    model: &M,
    traj: &Trajectory,
    opts: &LleOptions,
) -> Result<LleEstimate, AnalysisError> {
    lle_from_provider(traj.len(), traj.dim(), opts, |t, out| {
        model.jacobian(t, traj.state(t - 1), out)
    })
}

/// Core of the estimator. `jacobian(t, out)` fills `J_t` for `t = 1..=len`.
pub fn lle_from_provider<F>(
    len: usize,
    dim: usize,
    opts: &LleOptions,
    mut jacobian: F,
) -> Result<LleEstimate, AnalysisError>
where
    F: FnMut(usize, &mut Mat),
{
    if len < MIN_LLE_STEPS {
        return Err(AnalysisError::TooShort {
            len,
            min: MIN_LLE_STEPS,
        });
    }
    if opts.n_vectors == 0 || dim == 0 {
        return Err(AnalysisError::InvalidArgument(
            "need at least one start vector and a positive dimension".into(),
        ));
    }
    let mut r = rng::substream(opts.seed, 0x11e);
    let mut vectors: Vec<Vec<f64>> = (0..opts.n_vectors)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim)
                .map(|_| r.sample::<f64, _>(StandardNormal))
                .collect();
            let n = norm2(&v);
            if n > 0.0 {
                break v.into_iter().map(|x| x / n).collect();
            }
        })
        .collect();
    let skip = if opts.burn_in { burn_in_steps(len) } else { 0 };
    let mut sums = vec![0.0; opts.n_vectors];
    let mut dead = vec![false; opts.n_vectors];
    let mut jac = Mat::zeros(dim, dim);
    let mut next = vec![0.0; dim];
    for t in 1..=len {
        jacobian(t, &mut jac);
        for (k, v) in vectors.iter_mut().enumerate() {
            if dead[k] {
                continue;
            }
            jac.matvec_into(v, &mut next);
            let stretch = norm2(&next);
            if stretch == 0.0 {
                dead[k] = true;
                continue;
            }
            if t > skip {
                sums[k] += stretch.ln();
            }
            for (vi, ni) in v.iter_mut().zip(&next) {
                *vi = ni / stretch;
            }
        }
    }
    let count = (len - skip) as f64;
    let per_vector: Vec<f64> = sums
        .iter()
        .zip(&dead)
        .map(|(s, &d)| if d { f64::NEG_INFINITY } else { s / count })
        .collect();
    if dead.iter().any(|&d| d) {
        log::warn!("Jacobian sequence annihilated a tangent vector; LLE is -inf");
    }
    let lambda = per_vector.iter().sum::<f64>() / per_vector.len() as f64;
    Ok(LleEstimate { lambda, per_vector })
}
