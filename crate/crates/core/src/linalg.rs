//! Small dense matrix kernel.
//!
//! Blocks of the residual Jacobian are `D x D` with `D` in the tens, so
//! everything here is plain row-major `f64` with no blocking or SIMD. The
//! Jacobi SVD is only meant for the brute-force conditioning oracle, where
//! the full `TD x TD` matrix is materialized; it refuses sides larger than
//! [`ORACLE_MAX_SIDE`].

use std::fmt;
use std::ops::{Index, IndexMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest side accepted by the dense oracle routines.
pub const ORACLE_MAX_SIDE: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {op} on {lhs:?} and {rhs:?}")]
    DimensionMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error(
        "power iteration did not converge after {iterations} iterations (best estimate {best})"
    )]
    NoConvergence { iterations: usize, best: f64 },
    #[error("matrix side {side} exceeds the oracle limit of {limit}")]
    OracleLimit { side: usize, limit: usize },
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is singular to working precision")]
    Singular,
}

/// Dense row-major `f64` matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// Builds a matrix from row-major data. Panics if the length is wrong.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must equal rows*cols");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self::from_vec(r, c, data)
    }

    pub fn scalar(v: f64) -> Self {
        Self::from_vec(1, 1, vec![v])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)])
            .collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn scale(&self, k: f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * k).collect(),
        }
    }

    pub fn sub(&self, other: &Mat) -> Result<Mat, LinalgError> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn add(&self, other: &Mat) -> Result<Mat, LinalgError> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    fn zip_with(
        &self,
        other: &Mat,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Mat, LinalgError> {
        if self.shape() != other.shape() {
            return Err(LinalgError::DimensionMismatch {
                op,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `y = self * x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot(&self.data[i * self.cols..(i + 1) * self.cols], x);
        }
    }

    /// `y = self^T * x`.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (yj, a) in y.iter_mut().zip(row) {
                *yj += a * xi;
            }
        }
        y
    }

    /// Writes `self * rhs` into `out`, which must already have the right shape.
    pub fn matmul_into(&self, rhs: &Mat, out: &mut Mat) {
        debug_assert_eq!(self.cols, rhs.rows);
        debug_assert_eq!(out.shape(), (self.rows, rhs.cols));
        let n = rhs.cols;
        out.data.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[k * n..(k + 1) * n];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

pub fn matmul(a: &Mat, b: &Mat) -> Result<Mat, LinalgError> {
    if a.cols != b.rows {
        return Err(LinalgError::DimensionMismatch {
            op: "matmul",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let mut out = Mat::zeros(a.rows, b.cols);
    a.matmul_into(b, &mut out);
    Ok(out)
}

pub fn norm2(x: &[f64]) -> f64 {
    // Scaled accumulation so that huge-but-finite vectors don't overflow.
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * x.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}

/// Inner product with four independent accumulators.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ac.remainder().iter().zip(bc.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub const DEFAULT_POWER_TOL: f64 = 1e-10;
pub const DEFAULT_POWER_MAX_ITER: usize = 10_000;
const RESTART_SEED: u64 = 0x5eed_0f_7e57;

/// Largest singular value by power iteration on `A^T A`.
///
/// Starts from the normalized all-ones vector, then makes one restart from a
/// seeded random vector and keeps the larger estimate; an all-ones start can
/// be orthogonal to the top right singular vector. When neither run settles
/// (nearly equal top singular values) a matrix within the oracle size limit
/// falls back to the Jacobi SVD.
pub fn spectral_norm(a: &Mat, tol: f64, max_iter: usize) -> Result<f64, LinalgError> {
    match power_spectral_norm(a, tol, max_iter) {
        Err(LinalgError::NoConvergence { .. }) if a.rows.max(a.cols) <= ORACLE_MAX_SIDE => {
            Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
        }
        other => other,
    }
}

fn power_spectral_norm(a: &Mat, tol: f64, max_iter: usize) -> Result<f64, LinalgError> {
    if a.rows == 0 || a.cols == 0 {
        return Ok(0.0);
    }
    let n = a.cols;
    let ones = vec![1.0 / (n as f64).sqrt(); n];
    let first = power_iterate(a, ones, tol, max_iter);

    let mut rng = ChaCha8Rng::seed_from_u64(RESTART_SEED);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let second = power_iterate(a, v, tol, max_iter);

    match (first, second) {
        (Ok(x), Ok(y)) => Ok(x.max(y)),
        (Ok(x), Err(LinalgError::NoConvergence { best, .. })) if x >= best => Ok(x),
        (Err(LinalgError::NoConvergence { best, .. }), Ok(y)) if y >= best => Ok(y),
        (Ok(_), Err(e)) | (Err(e), Ok(_)) => Err(e),
        (Err(e1), Err(e2)) => match (&e1, &e2) {
            (
                LinalgError::NoConvergence { best: b1, .. },
                LinalgError::NoConvergence { best: b2, .. },
            ) => Err(LinalgError::NoConvergence {
                iterations: max_iter,
                best: b1.max(*b2),
            }),
            _ => Err(e1),
        },
    }
}

pub fn spectral_norm_default(a: &Mat) -> Result<f64, LinalgError> {
    spectral_norm(a, DEFAULT_POWER_TOL, DEFAULT_POWER_MAX_ITER)
}

fn power_iterate(a: &Mat, mut v: Vec<f64>, tol: f64, max_iter: usize) -> Result<f64, LinalgError> {
    let mut prev = f64::NAN;
    let mut best = 0.0_f64;
    for _ in 0..max_iter {
        let av = a.matvec(&v);
        let sigma = norm2(&av);
        if sigma == 0.0 {
            return Ok(0.0);
        }
        best = best.max(sigma);
        let mut w = a.matvec_transpose(&av);
        let nw = norm2(&w);
        if nw == 0.0 {
            return Ok(sigma);
        }
        w.iter_mut().for_each(|x| *x /= nw);
        v = w;
        if (sigma - prev).abs() <= tol * sigma {
            return Ok(sigma);
        }
        prev = sigma;
    }
    Err(LinalgError::NoConvergence {
        iterations: max_iter,
        best,
    })
}

/// All singular values of `a` (descending) by one-sided Jacobi rotations.
pub fn singular_values(a: &Mat) -> Result<Vec<f64>, LinalgError> {
    let side = a.rows.max(a.cols);
    if side > ORACLE_MAX_SIDE {
        return Err(LinalgError::OracleLimit {
            side,
            limit: ORACLE_MAX_SIDE,
        });
    }
    // Work on columns of the taller orientation.
    let work = if a.rows >= a.cols {
        a.clone()
    } else {
        a.transpose()
    };
    let m = work.rows;
    let n = work.cols;
    // Column-major copy so column pairs are contiguous.
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..m).map(|i| work[(i, j)]).collect())
        .collect();

    const MAX_SWEEPS: usize = 80;
    let eps = f64::EPSILON;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let cp = &cols[p];
                    let cq = &cols[q];
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for i in 0..m {
                        alpha += cp[i] * cp[i];
                        beta += cq[i] * cq[i];
                        gamma += cp[i] * cq[i];
                    }
                    (alpha, beta, gamma)
                };
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                let cp = &mut left[p];
                let cq = &mut right[0];
                for i in 0..m {
                    let x = cp[i];
                    let y = cq[i];
                    cp[i] = c * x - s * y;
                    cq[i] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| norm2(c)).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(sv)
}

/// `(sigma_max, sigma_min)` of a square matrix at oracle scale.
pub fn svd_extremes(a: &Mat) -> Result<(f64, f64), LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    let sv = singular_values(a)?;
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) => Ok((hi, lo)),
        _ => Ok((0.0, 0.0)),
    }
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn inverse(a: &Mat) -> Result<Mat, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows,
            cols: a.cols,
        });
    }
    let n = a.rows;
    let mut work = a.clone();
    let mut inv = Mat::identity(n);
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                work[(i, col)]
                    .abs()
                    .partial_cmp(&work[(j, col)].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(col);
        let p = work[(pivot, col)];
        if p.abs() <= f64::EPSILON * scale * 1e-3 {
            return Err(LinalgError::Singular);
        }
        if pivot != col {
            swap_rows(&mut work, pivot, col);
            swap_rows(&mut inv, pivot, col);
        }
        let p_inv = 1.0 / p;
        for j in 0..n {
            work[(col, j)] *= p_inv;
            inv[(col, j)] *= p_inv;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = work[(i, col)];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                work[(i, j)] -= f * work[(col, j)];
                inv[(i, j)] -= f * inv[(col, j)];
            }
        }
    }
    Ok(inv)
}

fn swap_rows(m: &mut Mat, a: usize, b: usize) {
    let c = m.cols;
    for j in 0..c {
        m.data.swap(a * c + j, b * c + j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_vec(
            r,
            c,
            (0..r * c)
                .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                .collect(),
        )
    }

    fn naive_matmul(a: &Mat, b: &Mat) -> Mat {
        let mut out = Mat::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    fn to_na(a: &Mat) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice())
    }

    #[test]
    fn identity_is_left_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_mat(&mut rng, 4, 3);
        assert_eq!(matmul(&Mat::identity(4), &a).unwrap(), a);
    }

    #[test]
    fn diagonal_product() {
        let c = matmul(&Mat::from_diag(&[2.0, 3.0]), &Mat::from_diag(&[5.0, 7.0])).unwrap();
        assert_eq!(c, Mat::from_diag(&[10.0, 21.0]));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let a = random_mat(&mut rng, 4, 4);
            let b = random_mat(&mut rng, 4, 4);
            let diff = matmul(&a, &b).unwrap().sub(&naive_matmul(&a, &b)).unwrap();
            assert!(diff.max_abs() <= 1e-13);
        }
    }

    #[test]
    fn matmul_rejects_bad_shapes() {
        let err = matmul(&Mat::zeros(2, 3), &Mat::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, LinalgError::DimensionMismatch { .. }));
    }

    #[test]
    fn spectral_norm_simple_cases() {
        assert_relative_eq!(
            spectral_norm_default(&Mat::identity(5)).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            spectral_norm_default(&Mat::from_diag(&[3.0, 1.0])).unwrap(),
            3.0,
            epsilon = 1e-12
        );
        assert_eq!(spectral_norm_default(&Mat::zeros(3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn spectral_norm_when_ones_start_is_orthogonal() {
        // Top right singular vector (1,-1)/sqrt2 is orthogonal to the ones start.
        let a = Mat::from_rows(&[&[2.0, -2.0], &[0.5, 0.5]]);
        let s = spectral_norm_default(&a).unwrap();
        assert_relative_eq!(s, 8.0_f64.sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn spectral_norm_vs_svd_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random_mat(&mut rng, 6, 6);
            let oracle = to_na(&a).singular_values().max();
            let s = spectral_norm_default(&a).unwrap();
            assert_relative_eq!(s, oracle, max_relative = 1e-8);
        }
    }

    #[test]
    fn svd_extremes_simple_cases() {
        assert_eq!(svd_extremes(&Mat::identity(3)).unwrap(), (1.0, 1.0));
        let (hi, lo) = svd_extremes(&Mat::from_diag(&[4.0, 0.25])).unwrap();
        assert_relative_eq!(hi, 4.0, epsilon = 1e-14);
        assert_relative_eq!(lo, 0.25, epsilon = 1e-14);
    }

    #[test]
    fn svd_extremes_rejects_oversize_and_rectangular() {
        assert!(matches!(
            svd_extremes(&Mat::zeros(ORACLE_MAX_SIDE + 1, ORACLE_MAX_SIDE + 1)),
            Err(LinalgError::OracleLimit { .. })
        ));
        assert!(matches!(
            svd_extremes(&Mat::zeros(2, 3)),
            Err(LinalgError::NotSquare { .. })
        ));
    }

    #[test]
    fn bidiagonal_sigma_min_matches_inverse_norm() {
        // Unit lower-bidiagonal with subdiagonal -0.5; its inverse is the
        // Neumann sum with entries 0.5^(i-j) below the diagonal.
        let n = 8;
        let mut a = Mat::identity(n);
        for i in 1..n {
            a[(i, i - 1)] = -0.5;
        }
        let mut inv = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                inv[(i, j)] = 0.5_f64.powi((i - j) as i32);
            }
        }
        let (_, lo) = svd_extremes(&a).unwrap();
        let inv_norm = spectral_norm_default(&inv).unwrap();
        assert!((lo - 1.0 / inv_norm).abs() <= 1e-9);
    }

    #[test]
    fn sigma_min_times_inverse_norm_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2, 5, 9, 16] {
            let mut a = random_mat(&mut rng, n, n);
            for i in 0..n {
                a[(i, i)] += 2.0;
            }
            let (_, lo) = svd_extremes(&a).unwrap();
            let inv = inverse(&a).unwrap();
            let prod = lo * spectral_norm_default(&inv).unwrap();
            assert_relative_eq!(prod, 1.0, max_relative = 1e-8);
        }
    }

    #[test]
    fn jacobi_matches_eigenvalues_of_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [3, 6, 10] {
            let b = random_mat(&mut rng, n, n);
            // SPD input: A = B^T B + I.
            let a = matmul(&b.transpose(), &b)
                .unwrap()
                .add(&Mat::identity(n))
                .unwrap();
            let gram = matmul(&a.transpose(), &a).unwrap();
            let mut eig: Vec<f64> = to_na(&gram)
                .symmetric_eigenvalues()
                .iter()
                .map(|e| e.sqrt())
                .collect();
            eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
            let sv = singular_values(&a).unwrap();
            for (s, e) in sv.iter().zip(&eig) {
                assert_relative_eq!(*s, *e, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn inverse_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut a = random_mat(&mut rng, 7, 7);
        for i in 0..7 {
            a[(i, i)] += 3.0;
        }
        let prod = matmul(&a, &inverse(&a).unwrap()).unwrap();
        assert!(prod.sub(&Mat::identity(7)).unwrap().max_abs() < 1e-12);
        assert_eq!(
            inverse(&Mat::zeros(3, 3)).unwrap_err(),
            LinalgError::Singular
        );
    }
}
