//! Trajectories, the temporal residual, and the merit function.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Mat;
use crate::model::DynamicsModel;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sequence length must be at least 1")]
    EmptyHorizon,
    #[error("requested length {requested} exceeds model horizon {horizon}")]
    BeyondHorizon { requested: usize, horizon: usize },
    #[error("initial state is not finite")]
    NonFiniteInitial,
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Initial condition `s_0` plus `T` stacked states `s_1..s_T`.
///
/// Storage is row-major: row `t-1` holds `s_t`. [`Trajectory::state`] uses
/// the math indexing (`state(0)` is `s_0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TrajectoryRepr", try_from = "TrajectoryRepr")]
pub struct Trajectory {
    s0: Vec<f64>,
    states: Vec<f64>,
    len: usize,
    /// First 1-based index holding a non-finite value, if any.
    overflow_from: Option<usize>,
}

impl Trajectory {
    pub fn new(s0: Vec<f64>, states: Vec<f64>) -> Result<Self, TrajectoryError> {
        let d = s0.len();
        if d == 0 || states.len() % d != 0 {
            return Err(TrajectoryError::DimensionMismatch {
                expected: d,
                got: states.len(),
            });
        }
        let len = states.len() / d;
        if len == 0 {
            return Err(TrajectoryError::EmptyHorizon);
        }
        let mut traj = Self {
            s0,
            states,
            len,
            overflow_from: None,
        };
        traj.refresh_overflow();
        Ok(traj)
    }

    pub fn from_rows(s0: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self, TrajectoryError> {
        let d = s0.len();
        let mut flat = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(TrajectoryError::DimensionMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
            flat.extend_from_slice(r);
        }
        Self::new(s0, flat)
    }

    pub fn filled(s0: Vec<f64>, len: usize, value: f64) -> Result<Self, TrajectoryError> {
        let d = s0.len();
        Self::new(s0, vec![value; len * d])
    }

    pub fn dim(&self) -> usize {
        self.s0.len()
    }

    /// Sequence length `T`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn s0(&self) -> &[f64] {
        &self.s0
    }

    /// Flat `T x D` state storage.
    pub fn states(&self) -> &[f64] {
        &self.states
    }

    /// `s_t` for `t` in `0..=T`.
    pub fn state(&self, t: usize) -> &[f64] {
        if t == 0 {
            &self.s0
        } else {
            let d = self.dim();
            &self.states[(t - 1) * d..t * d]
        }
    }

    pub fn state_mut(&mut self, t: usize) -> &mut [f64] {
        assert!(t >= 1, "s_0 is fixed");
        let d = self.dim();
        &mut self.states[(t - 1) * d..t * d]
    }

    /// Mutable flat storage; call [`Trajectory::refresh_overflow`] after
    /// writing non-finite values.
    pub fn states_mut(&mut self) -> &mut [f64] {
        &mut self.states
    }

    pub fn overflow_from(&self) -> Option<usize> {
        self.overflow_from
    }

    pub fn is_finite(&self) -> bool {
        self.overflow_from.is_none()
    }

    pub fn refresh_overflow(&mut self) {
        let d = self.dim();
        self.overflow_from = self
            .states
            .chunks_exact(d)
            .position(|row| row.iter().any(|x| !x.is_finite()))
            .map(|k| k + 1);
    }

    pub fn max_abs_diff(&self, other: &Trajectory) -> f64 {
        self.states
            .iter()
            .zip(&other.states)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Writes `t,x0,...,x{D-1}` CSV with `s_0` as the `t=0` row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), TrajectoryError> {
        let d = self.dim();
        write!(w, "t")?;
        for i in 0..d {
            write!(w, ",x{i}")?;
        }
        writeln!(w)?;
        for t in 0..=self.len {
            write!(w, "{t}")?;
            for v in self.state(t) {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads the format of [`Trajectory::write_csv`]. A leading
    /// `schema_version` column, as written by the CLI, is skipped.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, TrajectoryError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| TrajectoryError::Csv("empty input".into()))??;
        let mut cols: Vec<&str> = header.trim().split(',').collect();
        let versioned = cols.first() == Some(&"schema_version");
        if versioned {
            cols.remove(0);
        }
        if cols.first() != Some(&"t") || cols.len() < 2 {
            return Err(TrajectoryError::Csv(format!("bad header: {header}")));
        }
        for (i, c) in cols[1..].iter().enumerate() {
            if *c != format!("x{i}") {
                return Err(TrajectoryError::Csv(format!("bad column name {c}")));
            }
        }
        let d = cols.len() - 1;
        let mut s0 = None;
        let mut states = Vec::new();
        for (row_idx, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields: Vec<&str> = line.trim().split(',').collect();
            if versioned && !fields.is_empty() {
                fields.remove(0);
            }
            if fields.len() != d + 1 {
                return Err(TrajectoryError::Csv(format!(
                    "row {row_idx}: wrong field count"
                )));
            }
            let t: usize = fields[0]
                .parse()
                .map_err(|e| TrajectoryError::Csv(format!("row {row_idx}: {e}")))?;
            if t != row_idx {
                return Err(TrajectoryError::Csv(format!(
                    "row {row_idx}: time index {t}"
                )));
            }
            let vals = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| TrajectoryError::Csv(format!("row {row_idx}: {e}")))?;
            if t == 0 {
                s0 = Some(vals);
            } else {
                states.extend(vals);
            }
        }
        let s0 = s0.ok_or_else(|| TrajectoryError::Csv("missing t=0 row".into()))?;
        Self::new(s0, states)
    }
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRepr {
    s0: Vec<f64>,
    states: Vec<Vec<f64>>,
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "D")]
    d: usize,
    overflow_from: Option<usize>,
}

impl From<Trajectory> for TrajectoryRepr {
    fn from(tr: Trajectory) -> Self {
        let d = tr.dim();
        Self {
            states: tr.states.chunks_exact(d).map(<[f64]>::to_vec).collect(),
            t: tr.len,
            d,
            overflow_from: tr.overflow_from,
            s0: tr.s0,
        }
    }
}

impl TryFrom<TrajectoryRepr> for Trajectory {
    type Error = TrajectoryError;
    fn try_from(r: TrajectoryRepr) -> Result<Self, Self::Error> {
        if r.s0.len() != r.d || r.states.len() != r.t {
            return Err(TrajectoryError::DimensionMismatch {
                expected: r.t,
                got: r.states.len(),
            });
        }
        Trajectory::from_rows(r.s0, &r.states)
    }
}

/// Temporal residual `r_t = s_t - f_t(s_{t-1})`, row `t-1` holding `r_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub values: Vec<f64>,
    pub dim: usize,
}

impl Residual {
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `r_t` for 1-based `t`.
    pub fn at(&self, t: usize) -> &[f64] {
        &self.values[(t - 1) * self.dim..t * self.dim]
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm2(&self.values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

fn check_dims<M: DynamicsModel + ?Sized>(
    model: &M,
    traj: &Trajectory,
) -> Result<(), TrajectoryError> {
    if traj.dim() != model.dim() {
        return Err(TrajectoryError::DimensionMismatch {
            expected: model.dim(),
            got: traj.dim(),
        });
    }
    if traj.len() > model.horizon() {
        return Err(TrajectoryError::BeyondHorizon {
            requested: traj.len(),
            horizon: model.horizon(),
        });
    }
    Ok(())
}

/// Evaluates `s_t = f_t(s_{t-1})` for `t = 1..=len`.
///
/// Overflow is not an error: the returned trajectory records the first
/// non-finite index in [`Trajectory::overflow_from`].
pub fn sequential_rollout<M: DynamicsModel + ?Sized>(
    model: &M,
    s0: &[f64],
    len: usize,
) -> Result<Trajectory, TrajectoryError> {
    let d = model.dim();
    if s0.len() != d {
        return Err(TrajectoryError::DimensionMismatch {
            expected: d,
            got: s0.len(),
        });
    }
    if len == 0 {
        return Err(TrajectoryError::EmptyHorizon);
    }
    if len > model.horizon() {
        return Err(TrajectoryError::BeyondHorizon {
            requested: len,
            horizon: model.horizon(),
        });
    }
    if s0.iter().any(|x| !x.is_finite()) {
        return Err(TrajectoryError::NonFiniteInitial);
    }
    let mut states = vec![0.0; len * d];
    let mut prev = s0.to_vec();
    for (k, row) in states.chunks_exact_mut(d).enumerate() {
        model.step(k + 1, &prev, row);
        prev.copy_from_slice(row);
    }
    Trajectory::new(s0.to_vec(), states)
}

pub fn residual<M: DynamicsModel + ?Sized>(
    model: &M,
    traj: &Trajectory,
) -> Result<Residual, TrajectoryError> {
    check_dims(model, traj)?;
    Ok(residual_unchecked(model, traj))
}

pub(crate) fn residual_unchecked<M: DynamicsModel + ?Sized>(
    model: &M,
    traj: &Trajectory,
) -> Residual {
    let d = traj.dim();
    let mut values = vec![0.0; traj.len() * d];
    values
        .par_chunks_mut(d)
        .enumerate()
        .with_min_len(64)
        .for_each(|(k, row)| {
            let t = k + 1;
            model.step(t, traj.state(t - 1), row);
            for (r, s) in row.iter_mut().zip(traj.state(t)) {
                *r = s - *r;
            }
        });
    Residual { values, dim: d }
}

/// `0.5 * ||r||^2`. Non-finite residuals give a non-finite merit.
pub fn merit(res: &Residual) -> f64 {
    0.5 * res.values.iter().map(|x| x * x).sum::<f64>()
}

/// `J(s)^T r(s)` assembled block-wise:
/// `grad_t = r_t - J_{t+1}(s_t)^T r_{t+1}`, `grad_T = r_T`.
pub fn merit_gradient<M: DynamicsModel + ?Sized>(
    model: &M,
    traj: &Trajectory,
) -> Result<Vec<f64>, TrajectoryError> {
    check_dims(model, traj)?;
    let res = residual_unchecked(model, traj);
    Ok(gradient_from_residual(model, traj, &res))
}

pub(crate) fn gradient_from_residual<M: DynamicsModel + ?Sized>(
    model: &M,
    traj: &Trajectory,
    res: &Residual,
) -> Vec<f64> {
    let d = traj.dim();
    let big_t = traj.len();
    let mut grad = res.values.clone();
    grad.par_chunks_mut(d)
        .enumerate()
        .with_min_len(64)
        .for_each_init(
            || Mat::zeros(d, d),
            |jac, (k, g)| {
                let t = k + 1;
                if t == big_t {
                    return;
                }
                model.jacobian(t + 1, traj.state(t), jac);
                let back = jac.matvec_transpose(res.at(t + 1));
                for (gi, b) in g.iter_mut().zip(back) {
                    *gi -= b;
                }
            },
        );
    grad
}

/// Jacobians `J_t(s_{t-1})` for `t = 1..=T` along a trajectory.
pub fn jacobians_along<M: DynamicsModel + ?Sized>(model: &M, traj: &Trajectory) -> Vec<Mat> {
    let d = traj.dim();
    (1..traj.len() + 1)
        .into_par_iter()
        .with_min_len(64)
        .map(|t| {
            let mut j = Mat::zeros(d, d);
            model.jacobian(t, traj.state(t - 1), &mut j);
            j
        })
        .collect()
}
