use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use parseq_core::analysis::LleOptions;
use parseq_core::systems::{
    observer_pair, ContractiveScalarRnn, Flow, HenonMap, LinearTimeVarying, LogisticMap,
    MeanFieldRnn, MeanFieldRnnParams, ObserverStyle, TanhRnn, TwoWellLangevin, TwoWellParams,
    DEFAULT_DT, DEFAULT_INPUT_AMPLITUDE, GOLDEN_S0,
};
use parseq_core::{DynamicsModel, Init, Method, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Rollout,
    Solve,
    Lle,
    Bounds,
    Threshold,
    Twowell,
    Observer,
    OracleCheck,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Rollout => "rollout",
            Experiment::Solve => "solve",
            Experiment::Lle => "lle",
            Experiment::Bounds => "bounds",
            Experiment::Threshold => "threshold",
            Experiment::Twowell => "twowell",
            Experiment::Observer => "observer",
            Experiment::OracleCheck => "oracle-check",
        }
    }

    fn needs_system(&self) -> bool {
        matches!(
            self,
            Experiment::Rollout | Experiment::Solve | Experiment::Lle | Experiment::Bounds
        )
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowName {
    Lorenz,
    Rossler,
}

impl FlowName {
    pub fn flow(&self) -> Flow {
        match self {
            FlowName::Lorenz => Flow::lorenz(),
            FlowName::Rossler => Flow::rossler(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMode {
    System,
    #[default]
    Observer,
}

impl FlowMode {
    pub fn name(&self) -> &'static str {
        match self {
            FlowMode::System => "system",
            FlowMode::Observer => "observer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub horizon: usize,
    pub seed: u64,
    #[serde(default)]
    pub mode: FlowMode,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Flow default (substitution for Lorenz, gain feedback for Rössler)
    /// when absent.
    #[serde(default)]
    pub observer: Option<ObserverStyle>,
    #[serde(default)]
    pub observed: Option<usize>,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_amplitude() -> f64 {
    DEFAULT_INPUT_AMPLITUDE
}

fn default_input_scale() -> f64 {
    0.5
}

fn default_two() -> usize {
    2
}

fn default_henon_a() -> f64 {
    1.4
}

fn default_henon_b() -> f64 {
    0.3
}

/// A system and its parameters, tagged by `name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    MeanFieldRnn {
        dim: usize,
        gain: f64,
        horizon: usize,
        seed: u64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
    },
    TanhRnn {
        dim: usize,
        gain: f64,
        horizon: usize,
        seed: u64,
        #[serde(default = "default_input_scale")]
        input_scale: f64,
    },
    TwoWell {
        horizon: usize,
        seed: u64,
        #[serde(default = "default_two")]
        dim: usize,
        #[serde(default)]
        eps: Option<f64>,
    },
    Lorenz(FlowSpec),
    Rossler(FlowSpec),
    Logistic {
        r: f64,
        x0: f64,
        horizon: usize,
    },
    Henon {
        #[serde(default = "default_henon_a")]
        a: f64,
        #[serde(default = "default_henon_b")]
        b: f64,
        horizon: usize,
        #[serde(default)]
        s0: Option<[f64; 2]>,
    },
    Linear {
        dim: usize,
        horizon: usize,
        spectral_norm: f64,
        seed: u64,
    },
    ContractiveScalar {
        b: f64,
        horizon: usize,
        seed: u64,
    },
}

/// A constructed model with its initial state. `dt` is set for flows, whose
/// exponents are reported per unit time.
pub struct BuiltSystem {
    pub model: Box<dyn DynamicsModel>,
    pub s0: Vec<f64>,
    pub dt: Option<f64>,
}

impl SystemSpec {
    pub fn horizon(&self) -> usize {
        match self {
            SystemSpec::MeanFieldRnn { horizon, .. }
            | SystemSpec::TanhRnn { horizon, .. }
            | SystemSpec::TwoWell { horizon, .. }
            | SystemSpec::Logistic { horizon, .. }
            | SystemSpec::Henon { horizon, .. }
            | SystemSpec::Linear { horizon, .. }
            | SystemSpec::ContractiveScalar { horizon, .. } => *horizon,
            SystemSpec::Lorenz(f) | SystemSpec::Rossler(f) => f.horizon,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.horizon() == 0 {
            return bad("system horizon must be at least 1".into());
        }
        match self {
            SystemSpec::MeanFieldRnn { dim, gain, .. } | SystemSpec::TanhRnn { dim, gain, .. } => {
                if *dim == 0 {
                    return bad("dim must be at least 1".into());
                }
                if !(*gain > 0.0) {
                    return bad(format!("gain must be positive, got {gain}"));
                }
            }
            SystemSpec::TwoWell { dim, eps, .. } => {
                if *dim < 2 {
                    return bad(format!("two_well needs dim >= 2, got {dim}"));
                }
                if let Some(e) = eps {
                    if !(*e > 0.0) {
                        return bad(format!("eps must be positive, got {e}"));
                    }
                }
            }
            SystemSpec::Lorenz(f) | SystemSpec::Rossler(f) => {
                if !(f.dt > 0.0) {
                    return bad(format!("dt must be positive, got {}", f.dt));
                }
                if f.observed.is_some_and(|k| k > 2) {
                    return bad("observed coordinate must be 0, 1 or 2".into());
                }
            }
            SystemSpec::Linear { dim, spectral_norm, .. } => {
                if *dim == 0 {
                    return bad("dim must be at least 1".into());
                }
                if !(*spectral_norm >= 0.0) {
                    return bad(format!("spectral_norm must be non-negative, got {spectral_norm}"));
                }
            }
            SystemSpec::Logistic { r, x0, .. } => {
                if !r.is_finite() || !x0.is_finite() {
                    return bad("logistic parameters must be finite".into());
                }
            }
            SystemSpec::Henon { .. } | SystemSpec::ContractiveScalar { .. } => {}
        }
        Ok(())
    }

    pub fn build(&self) -> Result<BuiltSystem, CliError> {
        self.validate()?;
        let built = match self {
            SystemSpec::MeanFieldRnn {
                dim,
                gain,
                horizon,
                seed,
                amplitude,
            } => BuiltSystem {
                model: Box::new(MeanFieldRnn::new(MeanFieldRnnParams {
                    dim: *dim,
                    gain: *gain,
                    horizon: *horizon,
                    seed: *seed,
                    amplitude: *amplitude,
                })),
                s0: vec![0.0; *dim],
                dt: None,
            },
            SystemSpec::TanhRnn {
                dim,
                gain,
                horizon,
                seed,
                input_scale,
            } => BuiltSystem {
                model: Box::new(TanhRnn::random(*dim, *horizon, *gain, *input_scale, *seed)),
                s0: vec![0.0; *dim],
                dt: None,
            },
            SystemSpec::TwoWell {
                horizon,
                seed,
                dim,
                eps,
            } => {
                let mut params = TwoWellParams::with_dim(*dim);
                if let Some(e) = eps {
                    params.eps = *e;
                }
                let mut s0 = vec![0.0; *dim];
                s0[..2].copy_from_slice(&GOLDEN_S0);
                BuiltSystem {
                    model: Box::new(TwoWellLangevin::new(params, *horizon, *seed)),
                    s0,
                    dt: None,
                }
            }
            SystemSpec::Lorenz(f) => build_flow(Flow::lorenz(), f)?,
            SystemSpec::Rossler(f) => build_flow(Flow::rossler(), f)?,
            SystemSpec::Logistic { r, x0, horizon } => BuiltSystem {
                model: Box::new(LogisticMap {
                    r: *r,
                    horizon: *horizon,
                }),
                s0: vec![*x0],
                dt: None,
            },
            SystemSpec::Henon { a, b, horizon, s0 } => BuiltSystem {
                model: Box::new(HenonMap {
                    a: *a,
                    b: *b,
                    horizon: *horizon,
                }),
                s0: s0.unwrap_or([0.1, 0.1]).to_vec(),
                dt: None,
            },
            SystemSpec::Linear {
                dim,
                horizon,
                spectral_norm,
                seed,
            } => BuiltSystem {
                model: Box::new(LinearTimeVarying::random(*dim, *horizon, *spectral_norm, *seed)),
                s0: vec![0.0; *dim],
                dt: None,
            },
            SystemSpec::ContractiveScalar { b, horizon, seed } => BuiltSystem {
                model: Box::new(ContractiveScalarRnn::with_random_inputs(*b, *horizon, *seed)),
                s0: vec![0.0],
                dt: None,
            },
        };
        Ok(built)
    }
}

fn build_flow(flow: Flow, spec: &FlowSpec) -> Result<BuiltSystem, CliError> {
    let style = spec.observer.unwrap_or_else(|| flow.default_style());
    let pair = observer_pair(flow, spec.dt, spec.horizon, spec.seed, style, spec.observed)?;
    Ok(match spec.mode {
        FlowMode::System => BuiltSystem {
            model: Box::new(pair.system),
            s0: pair.system_s0,
            dt: Some(spec.dt),
        },
        FlowMode::Observer => BuiltSystem {
            model: Box::new(pair.observer),
            s0: pair.observer_s0,
            dt: Some(spec.dt),
        },
    })
}

/// Sweep axes. Absent axes take the experiment's defaults; present ones must
/// be non-empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub gains: Option<Vec<f64>>,
    pub horizons: Option<Vec<usize>>,
    pub seeds: Option<Vec<u64>>,
    pub solvers: Option<Vec<Method>>,
    /// Gradient descent step sizes; the best one per point is reported.
    pub step_sizes: Option<Vec<f64>>,
    pub flows: Option<Vec<FlowName>>,
    pub modes: Option<Vec<FlowMode>>,
    pub dim: Option<usize>,
    /// Iteration cap for the chaotic flow runs of the observer experiment.
    pub system_max_iters: Option<usize>,
}

impl Grid {
    fn validate(&self) -> Result<(), CliError> {
        fn nonempty<T>(name: &str, v: &Option<Vec<T>>) -> Result<(), CliError> {
            match v {
                Some(v) if v.is_empty() => Err(CliError::Config(format!("grid.{name} is empty"))),
                _ => Ok(()),
            }
        }
        nonempty("gains", &self.gains)?;
        nonempty("horizons", &self.horizons)?;
        nonempty("seeds", &self.seeds)?;
        nonempty("solvers", &self.solvers)?;
        nonempty("step_sizes", &self.step_sizes)?;
        nonempty("flows", &self.flows)?;
        nonempty("modes", &self.modes)?;
        if let Some(g) = &self.gains {
            if let Some(bad) = g.iter().find(|g| !(**g > 0.0)) {
                return Err(CliError::Config(format!("gains must be positive, got {bad}")));
            }
        }
        if let Some(h) = &self.horizons {
            if h.contains(&0) {
                return Err(CliError::Config("horizons must be at least 1".into()));
            }
        }
        if let Some(a) = &self.step_sizes {
            if let Some(bad) = a.iter().find(|a| !(**a > 0.0)) {
                return Err(CliError::Config(format!("step sizes must be positive, got {bad}")));
            }
        }
        if self.dim == Some(0) {
            return Err(CliError::Config("grid.dim must be at least 1".into()));
        }
        if self.system_max_iters == Some(0) {
            return Err(CliError::Config("grid.system_max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub system: Option<SystemSpec>,
    /// Solver for `solve`; DEER when absent.
    #[serde(default)]
    pub method: Option<Method>,
    /// Experiment default when absent: `uniform01` init for the RNN sweeps
    /// and single runs, `std_normal` for the two-well and observer runs.
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    #[serde(default)]
    pub lle: Option<LleOptions>,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            system: None,
            method: None,
            solver: None,
            lle: None,
            grid: Grid::default(),
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::ConfigRead {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(s) = &self.solver {
            s.validate().map_err(CliError::Config)?;
        }
        self.grid.validate()?;
        match &self.system {
            Some(s) => s.validate()?,
            None if self.experiment.needs_system() => {
                return Err(CliError::Config(format!(
                    "experiment {} needs a system",
                    self.experiment
                )))
            }
            None => {}
        }
        if let Some(l) = &self.lle {
            if l.n_vectors == 0 {
                return Err(CliError::Config("lle.n_vectors must be at least 1".into()));
            }
        }
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        self.solver.clone().unwrap_or_else(|| match self.experiment {
            Experiment::Twowell | Experiment::Observer => SolverConfig {
                init: Init::StdNormal,
                ..SolverConfig::default()
            },
            _ => SolverConfig::default(),
        })
    }

    pub fn lle_options(&self) -> LleOptions {
        self.lle.unwrap_or_default()
    }

    pub fn system(&self) -> Result<&SystemSpec, CliError> {
        self.system
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("experiment {} needs a system", self.experiment)))
    }
}
