use crate::linalg::Mat;

/// A time-varying map `s_t = f_t(s_{t-1})` with an analytic Jacobian.
///
/// Time indices are 1-based: `step(t, s)` evaluates `f_t` for `t` in
/// `1..=horizon()`. Inputs and frozen noise live inside the model, so the
/// solvers only ever see states. Implementations must be pure.
pub trait DynamicsModel: Send + Sync {
    fn dim(&self) -> usize;

    fn horizon(&self) -> usize;

    /// Writes `f_t(s)` into `out`.
    fn step(&self, t: usize, s: &[f64], out: &mut [f64]);

    /// Writes `df_t/ds` at `s` into `out` (`dim x dim`).
    fn jacobian(&self, t: usize, s: &[f64], out: &mut Mat);

    /// Diagonal of the Jacobian. Override when it is cheaper than the full
    /// matrix.
    fn jacobian_diag(&self, t: usize, s: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let mut j = Mat::zeros(d, d);
        self.jacobian(t, s, &mut j);
        for (i, o) in out.iter_mut().enumerate() {
            *o = j[(i, i)];
        }
    }

    fn step_vec(&self, t: usize, s: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.step(t, s, &mut out);
        out
    }

    fn jacobian_mat(&self, t: usize, s: &[f64]) -> Mat {
        let d = self.dim();
        let mut out = Mat::zeros(d, d);
        self.jacobian(t, s, &mut out);
        out
    }
}

impl<M: DynamicsModel + ?Sized> DynamicsModel for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn horizon(&self) -> usize {
        (**self).horizon()
    }
    fn step(&self, t: usize, s: &[f64], out: &mut [f64]) {
        (**self).step(t, s, out)
    }
    fn jacobian(&self, t: usize, s: &[f64], out: &mut Mat) {
        (**self).jacobian(t, s, out)
    }
    fn jacobian_diag(&self, t: usize, s: &[f64], out: &mut [f64]) {
        (**self).jacobian_diag(t, s, out)
    }
}

impl<M: DynamicsModel + ?Sized> DynamicsModel for Box<M> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn horizon(&self) -> usize {
        (**self).horizon()
    }
    fn step(&self, t: usize, s: &[f64], out: &mut [f64]) {
        (**self).step(t, s, out)
    }
    fn jacobian(&self, t: usize, s: &[f64], out: &mut Mat) {
        (**self).jacobian(t, s, out)
    }
    fn jacobian_diag(&self, t: usize, s: &[f64], out: &mut [f64]) {
        (**self).jacobian_diag(t, s, out)
    }
}

/// Largest relative error between the analytic Jacobian at `(t, s)` and
/// central finite differences with step `h = 1e-6 * (1 + |s_j|)`.
///
/// The error is measured against the larger of the two matrices' max-abs
/// entries, floored at 1, so entries that are zero analytically don't blow
/// up the ratio.
pub fn jacobian_fd_error<M: DynamicsModel + ?Sized>(model: &M, t: usize, s: &[f64]) -> f64 {
    let d = model.dim();
    let analytic = model.jacobian_mat(t, s);
    let mut fd = Mat::zeros(d, d);
    let mut plus = s.to_vec();
    let mut minus = s.to_vec();
    let mut fp = vec![0.0; d];
    let mut fm = vec![0.0; d];
    for j in 0..d {
        let h = 1e-6 * (1.0 + s[j].abs());
        plus[j] = s[j] + h;
        minus[j] = s[j] - h;
        model.step(t, &plus, &mut fp);
        model.step(t, &minus, &mut fm);
        for i in 0..d {
            fd[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
        plus[j] = s[j];
        minus[j] = s[j];
    }
    let scale = analytic.max_abs().max(fd.max_abs()).max(1.0);
    analytic
        .sub(&fd)
        .map(|m| m.max_abs() / scale)
        .unwrap_or(f64::INFINITY)
}
