//! Chaotic flows discretized with classical RK4, and observers driven by a
//! measured coordinate of a reference rollout.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::Mat;
use crate::model::DynamicsModel;
use crate::rng;
use crate::trajectory::{sequential_rollout, Trajectory, TrajectoryError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "flow", rename_all = "lowercase")]
pub enum Flow {
    Lorenz { sigma: f64, rho: f64, beta: f64 },
    Rossler { a: f64, b: f64, c: f64 },
}

impl Flow {
    pub fn lorenz() -> Self {
        Flow::Lorenz {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }

    pub fn rossler() -> Self {
        Flow::Rossler {
            a: 0.2,
            b: 0.2,
            c: 5.7,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Flow::Lorenz { .. } => "lorenz",
            Flow::Rossler { .. } => "rossler",
        }
    }

    /// Coordinate fed to the observer by default.
    pub fn default_observed(&self) -> usize {
        0
    }

    /// Observer construction used by default. Driving Rossler by
    /// substitution of any single coordinate leaves a non-negative
    /// conditional exponent, so it uses gain feedback on `x` instead.
    pub fn default_style(&self) -> ObserverStyle {
        match self {
            Flow::Lorenz { .. } => ObserverStyle::Substitution,
            Flow::Rossler { .. } => ObserverStyle::GainFeedback {
                gain: ROSSLER_OBSERVER_GAIN,
            },
        }
    }

    pub fn default_initial(&self) -> [f64; 3] {
        match self {
            Flow::Lorenz { .. } => [1.0, 1.0, 1.0],
            Flow::Rossler { .. } => [1.0, 1.0, 0.0],
        }
    }

    pub fn field(&self, s: &[f64]) -> [f64; 3] {
        let (x, y, z) = (s[0], s[1], s[2]);
        match *self {
            Flow::Lorenz { sigma, rho, beta } => {
                [sigma * (y - x), x * (rho - z) - y, x * y - beta * z]
            }
            Flow::Rossler { a, b, c } => [-y - z, x + a * y, b + z * (x - c)],
        }
    }

    pub fn field_jacobian(&self, s: &[f64]) -> [[f64; 3]; 3] {
        let (x, y, z) = (s[0], s[1], s[2]);
        match *self {
            Flow::Lorenz { sigma, rho, beta } => {
                [[-sigma, sigma, 0.0], [rho - z, -1.0, -x], [y, x, -beta]]
            }
            Flow::Rossler { a, c, .. } => [[0.0, -1.0, -1.0], [1.0, a, 0.0], [z, 0.0, x - c]],
        }
    }
}

type M3 = [[f64; 3]; 3];

fn mm(a: &M3, b: &M3) -> M3 {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    o
}

fn offset(s: &[f64], k: &[f64; 3], h: f64) -> [f64; 3] {
    [s[0] + h * k[0], s[1] + h * k[1], s[2] + h * k[2]]
}

/// `I + h * K`
fn shifted(k: &M3, h: f64) -> M3 {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = h * k[i][j] + if i == j { 1.0 } else { 0.0 };
        }
    }
    o
}

/// One RK4 step of the flow and, optionally, its derivative with respect to
/// the starting point (chain rule through the four stages).
pub fn rk4_step(flow: &Flow, dt: f64, s: &[f64], jac: Option<&mut Mat>) -> [f64; 3] {
    let k1 = flow.field(s);
    let p2 = offset(s, &k1, 0.5 * dt);
    let k2 = flow.field(&p2);
    let p3 = offset(s, &k2, 0.5 * dt);
    let k3 = flow.field(&p3);
    let p4 = offset(s, &k3, dt);
    let k4 = flow.field(&p4);
    let mut next = [0.0; 3];
    for i in 0..3 {
        next[i] = s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    if let Some(out) = jac {
        let d1 = flow.field_jacobian(s);
        let d2 = mm(&flow.field_jacobian(&p2), &shifted(&d1, 0.5 * dt));
        let d3 = mm(&flow.field_jacobian(&p3), &shifted(&d2, 0.5 * dt));
        let d4 = mm(&flow.field_jacobian(&p4), &shifted(&d3, dt));
        for i in 0..3 {
            for j in 0..3 {
                let id = if i == j { 1.0 } else { 0.0 };
                out[(i, j)] =
                    id + dt / 6.0 * (d1[i][j] + 2.0 * d2[i][j] + 2.0 * d3[i][j] + d4[i][j]);
            }
        }
    }
    next
}

/// The flow itself as an autonomous discrete map.
#[derive(Debug, Clone)]
pub struct FlowSystem {
    pub flow: Flow,
    pub dt: f64,
    pub horizon: usize,
}

impl DynamicsModel for FlowSystem {
    fn dim(&self) -> usize {
        3
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn step(&self, _t: usize, s: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&rk4_step(&self.flow, self.dt, s, None));
    }

    fn jacobian(&self, _t: usize, s: &[f64], out: &mut Mat) {
        rk4_step(&self.flow, self.dt, s, Some(out));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "style", rename_all = "snake_case")]
pub enum ObserverStyle {
    /// Overwrite the observed coordinate with the measurement before each
    /// step (Pecora-Carroll drive-response).
    Substitution,
    /// Add `gain * dt * (y - s_obs)` to the observed coordinate after the
    /// step.
    GainFeedback { gain: f64 },
}

impl Default for ObserverStyle {
    fn default() -> Self {
        ObserverStyle::Substitution
    }
}

pub const DEFAULT_OBSERVER_GAIN: f64 = 5.0;
pub const ROSSLER_OBSERVER_GAIN: f64 = 3.0;

/// Observer of a flow driven by measurements `y_0..y_{T-1}` of one
/// coordinate of a reference trajectory. `f_t` consumes `y_{t-1}`.
#[derive(Debug, Clone)]
pub struct FlowObserver {
    pub flow: Flow,
    pub dt: f64,
    pub observed: usize,
    pub style: ObserverStyle,
    measurements: Vec<f64>,
}

impl FlowObserver {
    pub fn new(
        flow: Flow,
        dt: f64,
        observed: usize,
        style: ObserverStyle,
        measurements: Vec<f64>,
    ) -> Self {
        assert!(observed < 3);
        Self {
            flow,
            dt,
            observed,
            style,
            measurements,
        }
    }

    pub fn measurement(&self, t: usize) -> f64 {
        self.measurements[t - 1]
    }
}

impl DynamicsModel for FlowObserver {
    fn dim(&self) -> usize {
        3
    }

    fn horizon(&self) -> usize {
        self.measurements.len()
    }

    fn step(&self, t: usize, s: &[f64], out: &mut [f64]) {
        let y = self.measurement(t);
        match self.style {
            ObserverStyle::Substitution => {
                let mut driven = [s[0], s[1], s[2]];
                driven[self.observed] = y;
                out.copy_from_slice(&rk4_step(&self.flow, self.dt, &driven, None));
            }
            ObserverStyle::GainFeedback { gain } => {
                out.copy_from_slice(&rk4_step(&self.flow, self.dt, s, None));
                out[self.observed] += gain * self.dt * (y - s[self.observed]);
            }
        }
    }

    fn jacobian(&self, t: usize, s: &[f64], out: &mut Mat) {
        let y = self.measurement(t);
        match self.style {
            ObserverStyle::Substitution => {
                let mut driven = [s[0], s[1], s[2]];
                driven[self.observed] = y;
                rk4_step(&self.flow, self.dt, &driven, Some(out));
                for i in 0..3 {
                    out[(i, self.observed)] = 0.0;
                }
            }
            ObserverStyle::GainFeedback { gain } => {
                rk4_step(&self.flow, self.dt, s, Some(out));
                out[(self.observed, self.observed)] -= gain * self.dt;
            }
        }
    }
}

/// A flow, a reference rollout of it, and an observer driven by that rollout.
#[derive(Debug, Clone)]
pub struct ObserverPair {
    pub system: FlowSystem,
    pub observer: FlowObserver,
    pub system_s0: Vec<f64>,
    pub observer_s0: Vec<f64>,
    /// Sequential rollout of the system from `system_s0`.
    pub reference: Trajectory,
}

pub const DEFAULT_DT: f64 = 0.01;
const BURN_IN_STEPS: usize = 2_000;

/// Builds system and observer for `flow`.
///
/// The system starts on the attractor (a seeded perturbation of the flow's
/// default initial point, burned in for 2000 steps). The observer starts
/// from the system's initial state plus standard normal noise.
pub fn observer_pair(
    flow: Flow,
    dt: f64,
    horizon: usize,
    seed: u64,
    style: ObserverStyle,
    observed: Option<usize>,
) -> Result<ObserverPair, TrajectoryError> {
    assert!(dt > 0.0, "dt must be positive");
    let mut r = rng::substream(seed, 0x0b5);
    let base = flow.default_initial();
    let mut s: Vec<f64> = base
        .iter()
        .map(|x| x + 0.1 * r.sample::<f64, _>(StandardNormal))
        .collect();
    for _ in 0..BURN_IN_STEPS {
        s = rk4_step(&flow, dt, &s, None).to_vec();
    }
    let system = FlowSystem { flow, dt, horizon };
    let reference = sequential_rollout(&system, &s, horizon)?;
    let observed = observed.unwrap_or_else(|| flow.default_observed());
    let measurements = (0..horizon).map(|t| reference.state(t)[observed]).collect();
    let observer = FlowObserver::new(flow, dt, observed, style, measurements);
    let observer_s0 = s
        .iter()
        .map(|x| x + r.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(ObserverPair {
        system,
        observer,
        system_s0: s,
        observer_s0,
        reference,
    })
}

pub fn lorenz_observer(
    dt: f64,
    horizon: usize,
    seed: u64,
    style: ObserverStyle,
) -> Result<ObserverPair, TrajectoryError> {
    observer_pair(Flow::lorenz(), dt, horizon, seed, style, None)
}

pub fn rossler_observer(
    dt: f64,
    horizon: usize,
    seed: u64,
    style: ObserverStyle,
) -> Result<ObserverPair, TrajectoryError> {
    observer_pair(Flow::rossler(), dt, horizon, seed, style, None)
}
