use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{spectral_norm_default, Mat};
use crate::model::DynamicsModel;
use crate::rng;

/// `max |d/dz sech^2(z)|`, attained at `tanh(z) = 1/sqrt(3)`.
pub const SECH2_SLOPE_MAX: f64 = 0.769_800_358_919_501_2;

pub const DEFAULT_INPUT_AMPLITUDE: f64 = 0.1;

fn sech2(z: f64) -> f64 {
    let th = z.tanh();
    1.0 - th * th
}

/// Mean-field RNN `s_t = W tanh(s_{t-1}) + u_t`.
///
/// `W_ij ~ N(0, g^2/D)` with zero diagonal; `u_t = A sin(2 pi t / T)` on every
/// coordinate, one period over the horizon.
#[derive(Debug, Clone)]
pub struct MeanFieldRnn {
    w: Mat,
    gain: f64,
    amplitude: f64,
    horizon: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldRnnParams {
    pub dim: usize,
    pub gain: f64,
    pub horizon: usize,
    pub seed: u64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

fn default_amplitude() -> f64 {
    DEFAULT_INPUT_AMPLITUDE
}

impl MeanFieldRnn {
    pub fn new(params: MeanFieldRnnParams) -> Self {
        let d = params.dim;
        assert!(d >= 1, "dimension must be positive");
        assert!(params.gain > 0.0, "gain must be positive");
        let mut r = rng::substream(params.seed, 0x5717);
        let normal = Normal::new(0.0, params.gain / (d as f64).sqrt()).expect("valid std");
        let mut w = Mat::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    w[(i, j)] = normal.sample(&mut r);
                }
            }
        }
        Self {
            w,
            gain: params.gain,
            amplitude: params.amplitude,
            horizon: params.horizon,
        }
    }

    pub fn weights(&self) -> &Mat {
        &self.w
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn input(&self, t: usize) -> f64 {
        self.amplitude * (2.0 * PI * t as f64 / self.horizon as f64).sin()
    }

    /// Analytic upper bound on the Lipschitz constant of `J_t`:
    /// `||W||_2 * max|sech^2'|`.
    pub fn lipschitz_bound(&self) -> f64 {
        spectral_norm_default(&self.w).unwrap_or(f64::INFINITY) * SECH2_SLOPE_MAX
    }
}

pub fn mean_field_rnn(dim: usize, gain: f64, horizon: usize, seed: u64) -> MeanFieldRnn {
    MeanFieldRnn::new(MeanFieldRnnParams {
        dim,
        gain,
        horizon,
        seed,
        amplitude: DEFAULT_INPUT_AMPLITUDE,
    })
}

impl DynamicsModel for MeanFieldRnn {
    fn dim(&self) -> usize {
        self.w.rows()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn step(&self, t: usize, s: &[f64], out: &mut [f64]) {
        let th: Vec<f64> = s.iter().map(|x| x.tanh()).collect();
        self.w.matvec_into(&th, out);
        let u = self.input(t);
        out.iter_mut().for_each(|o| *o += u);
    }

    fn jacobian(&self, _t: usize, s: &[f64], out: &mut Mat) {
        let d = self.dim();
        let scale: Vec<f64> = s.iter().map(|&x| sech2(x)).collect();
        let w = self.w.as_slice();
        let o = out.as_mut_slice();
        for i in 0..d {
            for j in 0..d {
                o[i * d + j] = w[i * d + j] * scale[j];
            }
        }
    }

    fn jacobian_diag(&self, _t: usize, _s: &[f64], out: &mut [f64]) {
        // Zero self-coupling.
        out.iter_mut().for_each(|o| *o = 0.0);
    }
}

/// `s_t = tanh(W s_{t-1} + u_t)` with an explicit input sequence.
#[derive(Debug, Clone)]
pub struct TanhRnn {
    w: Mat,
    inputs: Vec<f64>,
}

impl TanhRnn {
    /// `inputs` is `horizon x dim`, row `t-1` holding `u_t`.
    pub fn new(w: Mat, inputs: Vec<f64>) -> Self {
        assert!(w.is_square());
        assert_eq!(inputs.len() % w.rows(), 0);
        Self { w, inputs }
    }

    /// Gaussian weights with variance `gain^2 / D` and Gaussian inputs.
    pub fn random(dim: usize, horizon: usize, gain: f64, input_scale: f64, seed: u64) -> Self {
        let mut r = rng::substream(seed, 0x7a4);
        let sd = gain / (dim as f64).sqrt();
        let w = Mat::from_vec(
            dim,
            dim,
            (0..dim * dim)
                .map(|_| sd * r.sample::<f64, _>(StandardNormal))
                .collect(),
        );
        let inputs = (0..dim * horizon)
            .map(|_| input_scale * r.sample::<f64, _>(StandardNormal))
            .collect();
        Self::new(w, inputs)
    }

    pub fn weights(&self) -> &Mat {
        &self.w
    }

    fn input(&self, t: usize) -> &[f64] {
        let d = self.w.rows();
        &self.inputs[(t - 1) * d..t * d]
    }

    fn preactivation(&self, t: usize, s: &[f64]) -> Vec<f64> {
        let mut z = self.w.matvec(s);
        for (zi, ui) in z.iter_mut().zip(self.input(t)) {
            *zi += ui;
        }
        z
    }

    /// `max|sech^2'| * ||W||_2^2`.
    pub fn lipschitz_bound(&self) -> f64 {
        let n = spectral_norm_default(&self.w).unwrap_or(f64::INFINITY);
        SECH2_SLOPE_MAX * n * n
    }
}

impl DynamicsModel for TanhRnn {
    fn dim(&self) -> usize {
        self.w.rows()
    }

    fn horizon(&self) -> usize {
        self.inputs.len() / self.w.rows()
    }

    fn step(&self, t: usize, s: &[f64], out: &mut [f64]) {
        for (o, z) in out.iter_mut().zip(self.preactivation(t, s)) {
            *o = z.tanh();
        }
    }

    fn jacobian(&self, t: usize, s: &[f64], out: &mut Mat) {
        let d = self.dim();
        let z = self.preactivation(t, s);
        for i in 0..d {
            let g = sech2(z[i]);
            for j in 0..d {
                out[(i, j)] = g * self.w[(i, j)];
            }
        }
    }
}

/// Scalar `x_t = tanh(w x_{t-1} + u_t)` with `w = tanh(b)`, so `|w| < 1` for
/// every finite `b` and the map is a contraction.
#[derive(Debug, Clone)]
pub struct ContractiveScalarRnn {
    w: f64,
    inputs: Vec<f64>,
}

impl ContractiveScalarRnn {
    pub fn new(b_param: f64, inputs: Vec<f64>) -> Self {
        Self {
            w: b_param.tanh(),
            inputs,
        }
    }

    pub fn with_random_inputs(b_param: f64, horizon: usize, seed: u64) -> Self {
        let mut r = rng::substream(seed, 0xc0);
        let inputs = (0..horizon)
            .map(|_| r.sample::<f64, _>(StandardNormal))
            .collect();
        Self::new(b_param, inputs)
    }

    pub fn weight(&self) -> f64 {
        self.w
    }
}

pub fn contractive_scalar_rnn(b_param: f64, inputs: Vec<f64>) -> ContractiveScalarRnn {
    ContractiveScalarRnn::new(b_param, inputs)
}

impl DynamicsModel for ContractiveScalarRnn {
    fn dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        self.inputs.len()
    }

    fn step(&self, t: usize, s: &[f64], out: &mut [f64]) {
        out[0] = (self.w * s[0] + self.inputs[t - 1]).tanh();
    }

    fn jacobian(&self, t: usize, s: &[f64], out: &mut Mat) {
        out[(0, 0)] = self.w * sech2(self.w * s[0] + self.inputs[t - 1]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::jacobian_fd_error;
    use crate::trajectory::sequential_rollout;

    #[test]
    fn slope_constant() {
        let z = (1.0 / 3.0_f64.sqrt()).atanh();
        let th = z.tanh();
        let slope = 2.0 * (1.0 - th * th) * th;
        assert!((slope - SECH2_SLOPE_MAX).abs() < 1e-15);
        assert!((SECH2_SLOPE_MAX - 4.0 / (3.0 * 3.0_f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn weights_have_zero_diagonal_and_right_variance() {
        let m = mean_field_rnn(100, 1.5, 10, 3);
        let w = m.weights();
        let mut off = Vec::new();
        for i in 0..100 {
            assert_eq!(w[(i, i)], 0.0);
            for j in 0..100 {
                if i != j {
                    off.push(w[(i, j)]);
                }
            }
        }
        let n = off.len() as f64;
        let mean = off.iter().sum::<f64>() / n;
        let var = off.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let target = 1.5 * 1.5 / 100.0;
        assert!(
            (var - target).abs() / target < 0.1,
            "var {var} target {target}"
        );
    }

    #[test]
    fn tiny_gain_follows_inputs() {
        let m = mean_field_rnn(5, 1e-12, 20, 0);
        let tr = sequential_rollout(&m, &[0.3; 5], 20).unwrap();
        for t in 1..=20 {
            for &x in tr.state(t) {
                assert!((x - m.input(t)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut r = rng::seeded(42);
        let mf = mean_field_rnn(6, 1.3, 50, 1);
        let tr = TanhRnn::random(4, 50, 1.2, 0.5, 2);
        let sc = ContractiveScalarRnn::with_random_inputs(0.8, 50, 3);
        for _ in 0..100 {
            let t = r.random_range(1..=50);
            let s6: Vec<f64> = (0..6).map(|_| r.random::<f64>() * 4.0 - 2.0).collect();
            assert!(jacobian_fd_error(&mf, t, &s6) < 1e-6);
            assert!(jacobian_fd_error(&tr, t, &s6[..4]) < 1e-6);
            assert!(jacobian_fd_error(&sc, t, &s6[..1]) < 1e-6);
        }
    }

    #[test]
    fn contractive_weight_bounds_jacobian() {
        let mut r = rng::seeded(8);
        for b in [-3.0, -0.4, 0.0, 0.9, 5.0] {
            let m = ContractiveScalarRnn::with_random_inputs(b, 100, 1);
            let w = b.tanh();
            assert!(w.abs() < 1.0);
            for _ in 0..10_000 {
                let t = r.random_range(1..=100);
                let s = r.random::<f64>() * 20.0 - 10.0;
                let j = m.jacobian_mat(t, &[s])[(0, 0)];
                assert!(j.abs() <= w.abs());
            }
        }
    }

    #[test]
    fn zero_b_is_memoryless() {
        let inputs = vec![0.3, -1.2, 2.0, 0.0];
        let m = contractive_scalar_rnn(0.0, inputs.clone());
        let tr = sequential_rollout(&m, &[5.0], 4).unwrap();
        for (t, u) in inputs.iter().enumerate() {
            assert_eq!(tr.state(t + 1)[0], u.tanh());
        }
    }
}
