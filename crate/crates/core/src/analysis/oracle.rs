//! Dense brute-force checks on the stacked Jacobian `J(s)` at small `T * D`.

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::linalg::{inverse, matmul, spectral_norm_default, svd_extremes, Mat, ORACLE_MAX_SIDE};
use crate::model::DynamicsModel;
use crate::trajectory::{jacobians_along, Trajectory};

/// Stacked Jacobian of the residual from per-step Jacobians `jacs[t-1] = J_t`:
/// identity blocks on the diagonal and `-J_t` at block `(t, t-1)` for
/// `t = 2..=T`. `J_1` does not appear because `s_0` is fixed.
pub fn full_jacobian_from_blocks(jacs: &[Mat]) -> Result<Mat, AnalysisError> {
    let t_len = jacs.len();
    let d = jacs.first().map_or(0, Mat::rows);
    let side = t_len * d;
    if side > ORACLE_MAX_SIDE {
        return Err(AnalysisError::OracleScale {
            side,
            limit: ORACLE_MAX_SIDE,
        });
    }
    let mut m = Mat::identity(side);
    for t in 2..=t_len {
        let j = &jacs[t - 1];
        let (r0, c0) = ((t - 1) * d, (t - 2) * d);
        for i in 0..d {
            for k in 0..d {
                m.as_mut_slice()[(r0 + i) * side + c0 + k] = -j[(i, k)];
            }
        }
    }
    Ok(m)
}

pub fn build_full_jacobian<M: DynamicsModel + ?Sized>(
    model: &M,
    traj: &Trajectory,
) -> Result<Mat, AnalysisError> {
    let side = traj.len() * traj.dim();
    if side > ORACLE_MAX_SIDE {
        return Err(AnalysisError::OracleScale {
            side,
            limit: ORACLE_MAX_SIDE,
        });
    }
    full_jacobian_from_blocks(&jacobians_along(model, traj))
}

/// Norms of every product `J_t J_{t-1} ... J_{s+1}` of the blocks that
/// appear in `J` (`t > s >= 1`), grouped by length `k = t - s`.
/// Entry `k` lists the norms of all products of length `k`; entry 0 is `[1]`.
pub fn product_norms(jacs: &[Mat]) -> Result<Vec<Vec<f64>>, AnalysisError> {
    let t_len = jacs.len();
    let mut by_len = vec![Vec::new(); t_len.max(1)];
    by_len[0].push(1.0);
    for s in 1..t_len {
        let mut prod = jacs[s].clone();
        by_len[1].push(spectral_norm_default(&prod)?);
        for t in s + 2..=t_len {
            prod = matmul(&jacs[t - 1], &prod)?;
            by_len[t - s].push(spectral_norm_default(&prod)?);
        }
    }
    Ok(by_len)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurnInConstants {
    pub a: f64,
    pub b: f64,
}

/// Tightest `a >= 1 >= b` with
/// `b e^{lambda k} <= ||J_t ... J_{s+1}|| <= a e^{lambda k}` for every
/// product of length `k = t - s` in `J`, the empty product included.
pub fn burn_in_constants(jacs: &[Mat], lambda: f64) -> Result<BurnInConstants, AnalysisError> {
    let norms = product_norms(jacs)?;
    let mut a = 1.0_f64;
    let mut b = 1.0_f64;
    for (k, ns) in norms.iter().enumerate() {
        let scale = (-lambda * k as f64).exp();
        for n in ns {
            a = a.max(n * scale);
            b = b.min(n * scale);
        }
    }
    Ok(BurnInConstants { a, b })
}

/// Growth rate fitted to the longest product: `log ||J_T ... J_2|| / (T-1)`.
/// A convenient `lambda` to instantiate the burn-in inequality exactly.
pub fn finite_time_lle(jacs: &[Mat]) -> Result<f64, AnalysisError> {
    if jacs.len() < 2 {
        return Ok(0.0);
    }
    let norms = product_norms(jacs)?;
    let longest = norms.last().and_then(|v| v.first()).copied().unwrap_or(1.0);
    Ok(longest.ln() / (jacs.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeumannCheck {
    /// `||J^{-1}||_2` from an explicit inverse.
    pub norm: f64,
    /// `a sum_{k<T} e^{lambda k}` with `lambda = max_t log ||J_t||_2`.
    pub bound: f64,
    /// `||J_T ... J_2||_2`, the bottom-left block of `J^{-1}`; never exceeds
    /// `norm`.
    pub corner: f64,
    pub lambda: f64,
    pub a: f64,
}

impl NeumannCheck {
    pub fn holds(&self) -> bool {
        self.norm <= self.bound * (1.0 + 1e-9) && self.corner <= self.norm * (1.0 + 1e-9)
    }
}

pub fn neumann_check_from_blocks(jacs: &[Mat]) -> Result<NeumannCheck, AnalysisError> {
    let full = full_jacobian_from_blocks(jacs)?;
    let inv = inverse(&full).expect("unit lower-triangular matrices are invertible");
    let norm = spectral_norm_default(&inv)?;
    let mut lambda = f64::NEG_INFINITY;
    for j in jacs.iter().skip(1) {
        lambda = lambda.max(spectral_norm_default(j)?.ln());
    }
    let BurnInConstants { a, .. } = if lambda.is_finite() {
        burn_in_constants(jacs, lambda)?
    } else {
        BurnInConstants { a: 1.0, b: 1.0 }
    };
    let bound = a
        * (0..jacs.len())
            .map(|k| {
                if k == 0 {
                    1.0
                } else {
                    (lambda * k as f64).exp()
                }
            })
            .sum::<f64>();
    let norms = product_norms(jacs)?;
    let corner = norms.last().and_then(|v| v.first()).copied().unwrap_or(1.0);
    Ok(NeumannCheck {
        norm,
        bound,
        corner,
        lambda,
        a,
    })
}

pub fn neumann_inverse_norm_check<M: DynamicsModel + ?Sized>(
    model: &M,
    traj: &Trajectory,
) -> Result<NeumannCheck, AnalysisError> {
    neumann_check_from_blocks(&jacobians_along(model, traj))
}

/// `(sigma_max(J), sigma_min(J))` by dense SVD.
pub fn jacobian_extremes(jacs: &[Mat]) -> Result<(f64, f64), AnalysisError> {
    Ok(svd_extremes(&full_jacobian_from_blocks(jacs)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_is_identity() {
        let m = full_jacobian_from_blocks(&[Mat::from_rows(&[&[3.0, 1.0], &[0.0, 2.0]])]).unwrap();
        assert_eq!(m, Mat::identity(2));
    }

    #[test]
    fn two_step_scalar_layout() {
        let m = full_jacobian_from_blocks(&[Mat::scalar(9.0), Mat::scalar(0.5)]).unwrap();
        assert_eq!(m, Mat::from_rows(&[&[1.0, 0.0], &[-0.5, 1.0]]));
    }

    #[test]
    fn oracle_scale_enforced() {
        let jacs = vec![Mat::identity(8); 65];
        assert!(matches!(
            full_jacobian_from_blocks(&jacs),
            Err(AnalysisError::OracleScale { side: 520, .. })
        ));
    }

    #[test]
    fn zero_jacobians_give_identity() {
        let c = neumann_check_from_blocks(&vec![Mat::zeros(2, 2); 5]).unwrap();
        assert!((c.norm - 1.0).abs() < 1e-12);
        assert!(c.bound >= 1.0);
        assert!(c.holds());
    }

    #[test]
    fn contracting_scalar_chain() {
        let c = neumann_check_from_blocks(&vec![Mat::scalar(0.5); 8]).unwrap();
        let geometric = (1.0 - 0.5_f64.powi(8)) / 0.5;
        assert!((c.bound - geometric).abs() < 1e-12);
        assert!(c.norm <= geometric);
        assert!(c.holds());
    }

    #[test]
    fn expanding_scalar_chain() {
        let c = neumann_check_from_blocks(&vec![Mat::scalar(1.5); 8]).unwrap();
        assert!(c.norm >= 1.5_f64.powi(7));
        assert!((c.corner - 1.5_f64.powi(7)).abs() < 1e-9);
        assert!(c.holds());
    }

    #[test]
    fn burn_in_constants_for_constant_scalar_chain() {
        let jacs = vec![Mat::scalar(0.8); 6];
        let c = burn_in_constants(&jacs, 0.8_f64.ln()).unwrap();
        assert!((c.a - 1.0).abs() < 1e-12 && (c.b - 1.0).abs() < 1e-12);
        assert!((finite_time_lle(&jacs).unwrap() - 0.8_f64.ln()).abs() < 1e-12);
    }
}
