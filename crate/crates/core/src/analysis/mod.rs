//! Predictability and conditioning diagnostics.

mod bounds;
mod conditioning;
mod lipschitz;
mod lle;
mod oracle;
pub mod stats;

use thiserror::Error;

use crate::linalg::LinalgError;
use crate::trajectory::TrajectoryError;

pub use bounds::{
    basin_radius, basin_radius_from_lle, fit_linear_rate, pl_bounds, predict_steps, tilde_mu,
    PlBounds, LAMBDA_ZERO_TOL,
};
pub use conditioning::{conditioning_report, ConditioningOptions, ConditioningReport};
pub use lipschitz::estimate_lipschitz;
pub use lle::{
    burn_in_steps, estimate_lle, estimate_lle_along, estimate_lle_with, lle_from_provider,
    LleEstimate, LleOptions, DEFAULT_LLE_VECTORS, MIN_LLE_STEPS,
};
pub use oracle::{
    build_full_jacobian, burn_in_constants, finite_time_lle, full_jacobian_from_blocks,
    jacobian_extremes, neumann_check_from_blocks, neumann_inverse_norm_check, product_norms,
    BurnInConstants, NeumannCheck,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("sequence of length {len} is too short (need at least {min})")]
    TooShort { len: usize, min: usize },
    #[error("dense oracle side {side} exceeds limit {limit}")]
    OracleScale { side: usize, limit: usize },
    #[error("mu must be positive, got {0}")]
    NonPositiveMu(f64),
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}
