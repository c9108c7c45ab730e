use serde::{Deserialize, Serialize};

use crate::scan::ScanMode;
use crate::trajectory::Trajectory;

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_STEP_SIZE: f64 = 0.25;

/// Starting trajectory `s^(0)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Zeros,
    #[default]
    Uniform01,
    StdNormal,
    Given(Trajectory),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NanPolicy {
    /// Replace every non-finite entry of the iterate with the corresponding
    /// entry of a fresh draw from the init stream, and keep iterating.
    #[default]
    ResetToInit,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Stop once the merit is at or below this value.
    pub tol: f64,
    /// Iteration cap; the horizon `T` when absent.
    pub max_iters: Option<usize>,
    pub init: Init,
    /// Gradient descent only.
    pub step_size: f64,
    pub nan_policy: NanPolicy,
    /// Reset non-finite entries to the original initialization instead of a
    /// fresh draw.
    pub nan_reset_same: bool,
    pub seed: u64,
    pub scan: ScanMode,
    /// Chunk count for the parallel scan; worker count when absent.
    pub chunks: Option<usize>,
    /// Record the LLE of every iterate's Jacobians.
    pub track_lle: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iters: None,
            init: Init::Uniform01,
            step_size: DEFAULT_STEP_SIZE,
            nan_policy: NanPolicy::ResetToInit,
            nan_reset_same: false,
            seed: 0,
            scan: ScanMode::Parallel,
            chunks: None,
            track_lle: false,
        }
    }
}

impl SolverConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.tol > 0.0) {
            return Err(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iters == Some(0) {
            return Err("max_iters must be at least 1".into());
        }
        if !(self.step_size > 0.0) {
            return Err(format!(
                "step_size must be positive, got {}",
                self.step_size
            ));
        }
        if self.chunks == Some(0) {
            return Err("chunks must be at least 1".into());
        }
        Ok(())
    }
}
