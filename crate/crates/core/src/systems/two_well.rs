//! Overdamped Langevin dynamics in a two-Gaussian-mixture potential.
//!
//! `s_t = s_{t-1} - eps * grad phi(s_{t-1}) + sqrt(2 eps) w_t` with
//! `phi = -log(sum_k pi_k N(s; c_k, diag(v_k)))`. The noise `w_t` is drawn
//! once at construction, which turns the sampler into a deterministic
//! time-varying map.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::Mat;
use crate::model::DynamicsModel;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoWellParams {
    pub eps: f64,
    pub centers: [Vec<f64>; 2],
    /// Diagonal covariance of each well.
    pub variances: [Vec<f64>; 2],
    pub weights: [f64; 2],
}

impl TwoWellParams {
    /// Golden configuration used by the two-well experiments.
    ///
    /// Both wells share `diag(v_x, v_y)`, so the `x` row of the Jacobian is
    /// `1 - eps / v_x` everywhere and bounds the LLE from below by
    /// `log(1 - eps / v_x)`; with `eps = 0.015`, `v_x = 1` that is `-0.015`.
    pub fn golden() -> Self {
        Self::with_dim(2)
    }

    /// Golden configuration embedded in `dim >= 2` dimensions; extra
    /// coordinates share the first coordinate's variance.
    pub fn with_dim(dim: usize) -> Self {
        assert!(dim >= 2, "two-well potential needs at least 2 dimensions");
        let mut c1 = vec![0.0; dim];
        let mut c2 = vec![0.0; dim];
        c1[1] = -1.4;
        c2[1] = 1.6;
        let mut v = vec![GOLDEN_VAR_X; dim];
        v[1] = GOLDEN_VAR_Y;
        Self {
            eps: GOLDEN_EPS,
            centers: [c1, c2],
            variances: [v.clone(), v],
            weights: [0.5, 0.5],
        }
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }
}

pub const GOLDEN_EPS: f64 = 0.015;
pub const GOLDEN_VAR_X: f64 = 1.0;
pub const GOLDEN_VAR_Y: f64 = 0.5;
/// Start of golden rollouts: the center of the lower well.
pub const GOLDEN_S0: [f64; 2] = [0.0, -1.4];

#[derive(Debug, Clone)]
pub struct TwoWellLangevin {
    params: TwoWellParams,
    noise: Vec<f64>,
    log_norm: [f64; 2],
}

impl TwoWellLangevin {
    pub fn new(params: TwoWellParams, horizon: usize, seed: u64) -> Self {
        let d = params.dim();
        assert!(params.eps > 0.0, "step size must be positive");
        let mut r = rng::substream(seed, 0x2e11);
        let noise = (0..horizon * d)
            .map(|_| r.sample::<f64, _>(StandardNormal))
            .collect();
        let log_norm = [0, 1].map(|k| {
            params.weights[k].ln()
                - 0.5
                    * params.variances[k]
                        .iter()
                        .map(|v| (2.0 * std::f64::consts::PI * v).ln())
                        .sum::<f64>()
        });
        Self {
            params,
            noise,
            log_norm,
        }
    }

    pub fn params(&self) -> &TwoWellParams {
        &self.params
    }

    /// Posterior well responsibilities and the scaled offsets
    /// `g_k = V_k^{-1} (s - c_k)`.
    fn components(&self, s: &[f64]) -> ([f64; 2], [Vec<f64>; 2]) {
        let mut logp = [0.0; 2];
        let g = [0, 1].map(|k| {
            let c = &self.params.centers[k];
            let v = &self.params.variances[k];
            let mut quad = 0.0;
            let gk: Vec<f64> = s
                .iter()
                .zip(c)
                .zip(v)
                .map(|((x, ci), vi)| {
                    let dx = x - ci;
                    quad += dx * dx / vi;
                    dx / vi
                })
                .collect();
            logp[k] = self.log_norm[k] - 0.5 * quad;
            gk
        });
        let m = logp[0].max(logp[1]);
        let e = [(logp[0] - m).exp(), (logp[1] - m).exp()];
        let z = e[0] + e[1];
        ([e[0] / z, e[1] / z], g)
    }

    pub fn potential(&self, s: &[f64]) -> f64 {
        let mut logp = [0.0; 2];
        for k in 0..2 {
            let quad: f64 = s
                .iter()
                .zip(&self.params.centers[k])
                .zip(&self.params.variances[k])
                .map(|((x, c), v)| (x - c) * (x - c) / v)
                .sum();
            logp[k] = self.log_norm[k] - 0.5 * quad;
        }
        let m = logp[0].max(logp[1]);
        -(m + ((logp[0] - m).exp() + (logp[1] - m).exp()).ln())
    }

    pub fn grad_potential(&self, s: &[f64]) -> Vec<f64> {
        let (w, g) = self.components(s);
        (0..s.len())
            .map(|i| w[0] * g[0][i] + w[1] * g[1][i])
            .collect()
    }

    pub fn hessian_potential(&self, s: &[f64]) -> Mat {
        let d = s.len();
        let (w, g) = self.components(s);
        let gbar: Vec<f64> = (0..d).map(|i| w[0] * g[0][i] + w[1] * g[1][i]).collect();
        let mut h = Mat::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let mut v = gbar[i] * gbar[j];
                for k in 0..2 {
                    v -= w[k] * g[k][i] * g[k][j];
                    if i == j {
                        v += w[k] / self.params.variances[k][i];
                    }
                }
                h[(i, j)] = v;
            }
        }
        h
    }
}

pub fn two_well(params: TwoWellParams, horizon: usize, seed: u64) -> TwoWellLangevin {
    TwoWellLangevin::new(params, horizon, seed)
}

impl DynamicsModel for TwoWellLangevin {
    fn dim(&self) -> usize {
        self.params.dim()
    }

    fn horizon(&self) -> usize {
        self.noise.len() / self.dim()
    }

    fn step(&self, t: usize, s: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let eps = self.params.eps;
        let amp = (2.0 * eps).sqrt();
        let grad = self.grad_potential(s);
        let w = &self.noise[(t - 1) * d..t * d];
        for i in 0..d {
            out[i] = s[i] - eps * grad[i] + amp * w[i];
        }
    }

    fn jacobian(&self, _t: usize, s: &[f64], out: &mut Mat) {
        let d = self.dim();
        let h = self.hessian_potential(s);
        let eps = self.params.eps;
        for i in 0..d {
            for j in 0..d {
                out[(i, j)] = f64::from(u8::from(i == j)) - eps * h[(i, j)];
            }
        }
    }
}
