use rand::Rng;
use rand_distr::StandardNormal;

use super::AnalysisError;
use crate::linalg::{norm2, spectral_norm_default, Mat};
use crate::model::DynamicsModel;
use crate::rng;
use crate::trajectory::Trajectory;

fn ball_point(r: &mut rng::Rng, center: &[f64], radius: f64) -> Vec<f64> {
    let d = center.len();
    let dir: Vec<f64> = (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
    let n = norm2(&dir).max(f64::MIN_POSITIVE);
    let rho = radius * r.random::<f64>().powf(1.0 / d as f64);
    center
        .iter()
        .zip(&dir)
        .map(|(c, x)| c + rho * x / n)
        .collect()
}

/// Sampled estimate of the Lipschitz constant of `s -> J_t(s)` (spectral
/// norm), taken over states within `radius` of the center trajectory.
///
/// Each sample picks a time `t`, a point `s` uniformly in the ball around
/// `center.state(t-1)`, and a partner `s' = s + delta` at a log-uniform
/// distance in `[1e-4, 1] * radius`. Being a maximum over samples this is a
/// lower estimate of the true constant.
pub fn estimate_lipschitz<M: DynamicsModel + ?Sized>(
    model: &M,
    center: &Trajectory,
    n_samples: usize,
    radius: f64,
    seed: u64,
) -> Result<f64, AnalysisError> {
    if n_samples < 2 {
        return Err(AnalysisError::InvalidArgument(
            "need at least 2 samples".into(),
        ));
    }
    if !(radius > 0.0) {
        return Err(AnalysisError::InvalidArgument(format!(
            "radius must be positive, got {radius}"
        )));
    }
    let d = center.dim();
    let mut r = rng::substream(seed, 0x1195);
    let mut ja = Mat::zeros(d, d);
    let mut jb = Mat::zeros(d, d);
    let mut best = 0.0_f64;
    for _ in 0..n_samples {
        let t = r.random_range(1..=center.len());
        let s = ball_point(&mut r, center.state(t - 1), radius);
        let gap = radius * 10f64.powf(-4.0 * r.random::<f64>());
        let dir: Vec<f64> = (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let n = norm2(&dir).max(f64::MIN_POSITIVE);
        let s2: Vec<f64> = s.iter().zip(&dir).map(|(x, u)| x + gap * u / n).collect();
        let dist = norm2(&s.iter().zip(&s2).map(|(a, b)| a - b).collect::<Vec<_>>());
        if dist == 0.0 {
            continue;
        }
        model.jacobian(t, &s, &mut ja);
        model.jacobian(t, &s2, &mut jb);
        let diff = ja.sub(&jb)?;
        best = best.max(spectral_norm_default(&diff)? / dist);
    }
    Ok(best)
}
