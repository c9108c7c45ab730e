use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{spectral_norm_default, Mat};
use crate::model::DynamicsModel;
use crate::rng;

/// `s_t = A_t s_{t-1} + c_t`.
#[derive(Debug, Clone)]
pub struct LinearTimeVarying {
    transitions: Vec<Mat>,
    offsets: Vec<f64>,
}

impl LinearTimeVarying {
    pub fn new(transitions: Vec<Mat>, offsets: Vec<f64>) -> Self {
        let d = transitions.first().map_or(0, Mat::rows);
        assert!(transitions.iter().all(|a| a.shape() == (d, d)));
        assert_eq!(offsets.len(), d * transitions.len());
        Self {
            transitions,
            offsets,
        }
    }

    /// Random Gaussian transitions rescaled to the given spectral norm, and
    /// standard normal offsets.
    pub fn random(dim: usize, horizon: usize, spectral_norm: f64, seed: u64) -> Self {
        let mut r = rng::substream(seed, 0x11a);
        let transitions = (0..horizon)
            .map(|_| {
                let a = Mat::from_vec(
                    dim,
                    dim,
                    (0..dim * dim)
                        .map(|_| r.sample::<f64, _>(StandardNormal))
                        .collect(),
                );
                let n = spectral_norm_default(&a).unwrap_or(1.0).max(1e-12);
                a.scale(spectral_norm / n)
            })
            .collect();
        let offsets = (0..dim * horizon)
            .map(|_| r.sample::<f64, _>(StandardNormal))
            .collect();
        Self::new(transitions, offsets)
    }

    pub fn transition(&self, t: usize) -> &Mat {
        &self.transitions[t - 1]
    }
}

impl DynamicsModel for LinearTimeVarying {
    fn dim(&self) -> usize {
        self.transitions.first().map_or(0, Mat::rows)
    }

    fn horizon(&self) -> usize {
        self.transitions.len()
    }

    fn step(&self, t: usize, s: &[f64], out: &mut [f64]) {
        let d = self.dim();
        self.transitions[t - 1].matvec_into(s, out);
        for (o, c) in out.iter_mut().zip(&self.offsets[(t - 1) * d..t * d]) {
            *o += c;
        }
    }

    fn jacobian(&self, t: usize, _s: &[f64], out: &mut Mat) {
        out.as_mut_slice()
            .copy_from_slice(self.transitions[t - 1].as_slice());
    }
}
