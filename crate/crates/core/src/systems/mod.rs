//! Benchmark dynamical systems, each with an analytic Jacobian.

mod flows;
mod linear;
mod maps;
mod rnn;
mod two_well;

pub use flows::{
    lorenz_observer, observer_pair, rk4_step, rossler_observer, Flow, FlowObserver, FlowSystem,
    ObserverPair, ObserverStyle, DEFAULT_DT, DEFAULT_OBSERVER_GAIN, ROSSLER_OBSERVER_GAIN,
};
pub use linear::LinearTimeVarying;
pub use maps::{henon_jacobians, logistic_jacobians, HenonMap, LogisticMap};
pub use rnn::{
    contractive_scalar_rnn, mean_field_rnn, ContractiveScalarRnn, MeanFieldRnn, MeanFieldRnnParams,
    TanhRnn, DEFAULT_INPUT_AMPLITUDE, SECH2_SLOPE_MAX,
};
pub use two_well::{
    two_well, TwoWellLangevin, TwoWellParams, GOLDEN_EPS, GOLDEN_S0, GOLDEN_VAR_X, GOLDEN_VAR_Y,
};
