//! Single runs and parameter sweeps.

use parseq_core::analysis::{
    conditioning_report, estimate_lle_along, ConditioningOptions, ConditioningReport, LleOptions,
};
use parseq_core::systems::{mean_field_rnn, observer_pair, two_well, TwoWellParams, GOLDEN_S0};
use parseq_core::{
    sequential_rollout, solve, DynamicsModel, Method, SolveError, SolverConfig, SolverReport,
    Trajectory,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, FlowMode, FlowName};
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_GAIN_POINTS: usize = 16;
pub const DEFAULT_THRESHOLD_HORIZONS: [usize; 3] = [100, 317, 954];
pub const DEFAULT_THRESHOLD_SEEDS: u64 = 5;
pub const DEFAULT_THRESHOLD_DIM: usize = 50;
pub const DEFAULT_GD_STEP_SIZES: [f64; 9] = [0.01, 0.1, 0.25, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
pub const DEFAULT_TWOWELL_HORIZONS: [usize; 3] = [100, 1_000, 10_000];
pub const DEFAULT_TWOWELL_SEEDS: u64 = 20;
pub const DEFAULT_OBSERVER_HORIZON: usize = 30_000;
pub const DEFAULT_SYSTEM_MAX_ITERS: usize = 2_000;

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

fn seeds_or(cfg: &ExperimentConfig, n: u64) -> Vec<u64> {
    cfg.grid.seeds.clone().unwrap_or_else(|| (0..n).collect())
}

/// Outcome of one solver run, whatever happened.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub steps: usize,
    pub converged: bool,
    pub final_merit: f64,
    pub nan_resets: usize,
    pub wall_seconds: f64,
    pub per_iter_lle: Option<Vec<f64>>,
}

impl From<&SolverReport> for RunOutcome {
    fn from(r: &SolverReport) -> Self {
        Self {
            steps: r.iterations,
            converged: r.converged,
            final_merit: r.final_merit(),
            nan_resets: r.nan_resets,
            wall_seconds: r.wall_seconds,
            per_iter_lle: r.per_iter_lle.clone(),
        }
    }
}

/// Runs a solver and folds failures into a non-converged outcome, so that a
/// sweep never aborts on one point.
pub fn run_point<M: DynamicsModel + ?Sized>(
    method: Method,
    model: &M,
    s0: &[f64],
    cfg: &SolverConfig,
) -> RunOutcome {
    match solve(method, model, s0, cfg) {
        Ok(r) => RunOutcome::from(&r),
        Err(SolveError::NonFinite { report }) => RunOutcome::from(report.as_ref()),
        Err(e) => {
            log::warn!("{method} run failed: {e}");
            RunOutcome {
                steps: 0,
                converged: false,
                final_merit: f64::NAN,
                nan_resets: 0,
                wall_seconds: 0.0,
                per_iter_lle: None,
            }
        }
    }
}

/// Gradient descent over a grid of step sizes. The reported run is the
/// fastest converged one, or the one with the smallest final merit when none
/// converges.
pub fn best_gd_run<M: DynamicsModel + ?Sized>(
    model: &M,
    s0: &[f64],
    cfg: &SolverConfig,
    step_sizes: &[f64],
) -> (f64, RunOutcome) {
    let mut best: Option<(f64, RunOutcome)> = None;
    for &alpha in step_sizes {
        let run = run_point(
            Method::GradientDescent,
            model,
            s0,
            &SolverConfig {
                step_size: alpha,
                ..cfg.clone()
            },
        );
        let better = match &best {
            None => true,
            Some((_, b)) => match (run.converged, b.converged) {
                (true, false) => true,
                (true, true) => run.steps < b.steps,
                (false, false) => b.final_merit.is_nan() || run.final_merit < b.final_merit,
                (false, true) => false,
            },
        };
        if better {
            best = Some((alpha, run));
        }
    }
    best.expect("step size grid is non-empty")
}

pub fn rollout(cfg: &ExperimentConfig) -> Result<Trajectory, CliError> {
    let sys = cfg.system()?.build()?;
    Ok(sequential_rollout(&sys.model, &sys.s0, sys.model.horizon())?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOutput {
    pub schema_version: u32,
    pub method: Method,
    #[serde(flatten)]
    pub report: SolverReport,
}

pub fn solve_one(cfg: &ExperimentConfig) -> Result<SolveOutput, CliError> {
    let sys = cfg.system()?.build()?;
    let method = cfg.method.unwrap_or(Method::Deer);
    let report = match solve(method, &sys.model, &sys.s0, &cfg.solver_config()) {
        Ok(r) => r,
        Err(SolveError::NonFinite { report }) => *report,
        Err(e) => return Err(e.into()),
    };
    Ok(SolveOutput {
        schema_version: SCHEMA_VERSION,
        method,
        report,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LleOutput {
    pub schema_version: u32,
    /// Per step.
    pub lambda: f64,
    pub per_vector: Vec<f64>,
    /// Per unit time, for flows.
    pub lambda_per_time: Option<f64>,
    pub horizon: usize,
    pub dim: usize,
}

pub fn lle(cfg: &ExperimentConfig) -> Result<LleOutput, CliError> {
    let sys = cfg.system()?.build()?;
    let traj = sequential_rollout(&sys.model, &sys.s0, sys.model.horizon())?;
    let est = estimate_lle_along(&sys.model, &traj, &cfg.lle_options())?;
    Ok(LleOutput {
        schema_version: SCHEMA_VERSION,
        lambda: est.lambda,
        lambda_per_time: sys.dt.map(|dt| est.lambda / dt),
        per_vector: est.per_vector,
        horizon: traj.len(),
        dim: traj.dim(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsOutput {
    pub schema_version: u32,
    pub parallelizable: bool,
    #[serde(flatten)]
    pub report: ConditioningReport,
}

pub fn bounds(cfg: &ExperimentConfig) -> Result<BoundsOutput, CliError> {
    let sys = cfg.system()?.build()?;
    let traj = sequential_rollout(&sys.model, &sys.s0, sys.model.horizon())?;
    let opts = ConditioningOptions {
        lle: cfg.lle_options(),
        ..ConditioningOptions::default()
    };
    let report = conditioning_report(&sys.model, &traj, &opts)?;
    Ok(BoundsOutput {
        schema_version: SCHEMA_VERSION,
        parallelizable: report.parallelizable(),
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub schema_version: u32,
    pub g: f64,
    pub lambda: f64,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub seed: u64,
    pub solver: String,
    pub steps: usize,
    pub converged: bool,
    pub final_merit: f64,
    pub nan_resets: usize,
    pub wall_seconds: f64,
}

/// Mean-field RNN sweep over gain, horizon and seed. The LLE of every point
/// is measured on its sequential rollout.
pub fn threshold(cfg: &ExperimentConfig) -> Result<Vec<ThresholdRow>, CliError> {
    let gains = cfg
        .grid
        .gains
        .clone()
        .unwrap_or_else(|| linspace(0.5, 2.0, DEFAULT_GAIN_POINTS));
    let horizons = cfg
        .grid
        .horizons
        .clone()
        .unwrap_or_else(|| DEFAULT_THRESHOLD_HORIZONS.to_vec());
    let seeds = seeds_or(cfg, DEFAULT_THRESHOLD_SEEDS);
    let solvers = cfg.grid.solvers.clone().unwrap_or_else(|| vec![Method::Deer]);
    let step_sizes = cfg
        .grid
        .step_sizes
        .clone()
        .unwrap_or_else(|| DEFAULT_GD_STEP_SIZES.to_vec());
    let dim = cfg.grid.dim.unwrap_or(DEFAULT_THRESHOLD_DIM);
    let base = cfg.solver_config();

    let mut points: Vec<(f64, usize, u64)> = Vec::new();
    for &g in &gains {
        for &t in &horizons {
            points.extend(seeds.iter().map(|&s| (g, t, s)));
        }
    }
    let rows: Vec<Vec<ThresholdRow>> = points
        .par_iter()
        .map(|&(g, t, seed)| {
            let model = mean_field_rnn(dim, g, t, seed);
            let s0 = vec![0.0; dim];
            let truth = sequential_rollout(&model, &s0, t)?;
            let lambda = estimate_lle_along(&model, &truth, &LleOptions::seeded(seed))
                .map(|e| e.lambda)
                .unwrap_or(f64::NAN);
            let scfg = SolverConfig {
                seed,
                ..base.clone()
            };
            Ok(solvers
                .iter()
                .map(|&method| {
                    let run = if method == Method::GradientDescent {
                        let (alpha, run) = best_gd_run(&model, &s0, &scfg, &step_sizes);
                        log::debug!("g={g} T={t} seed={seed}: best gd step size {alpha}");
                        run
                    } else {
                        run_point(method, &model, &s0, &scfg)
                    };
                    log::info!(
                        "g={g:.3} T={t} seed={seed} {method}: lambda={lambda:.4} steps={} converged={}",
                        run.steps,
                        run.converged
                    );
                    ThresholdRow {
                        schema_version: SCHEMA_VERSION,
                        g,
                        lambda,
                        horizon: t,
                        seed,
                        solver: method.name().to_string(),
                        steps: run.steps,
                        converged: run.converged,
                        final_merit: run.final_merit,
                        nan_resets: run.nan_resets,
                        wall_seconds: run.wall_seconds,
                    }
                })
                .collect())
        })
        .collect::<Result<_, CliError>>()?;
    Ok(rows.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoWellRow {
    pub schema_version: u32,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub seed: u64,
    pub steps: usize,
    pub lambda: f64,
    pub converged: bool,
}

/// LLE of the DEER iterate after `iteration` steps; iteration 0 is the
/// initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LleTraceRow {
    pub schema_version: u32,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub seed: u64,
    pub iteration: usize,
    pub lle: f64,
}

pub struct TwoWellOutput {
    pub rows: Vec<TwoWellRow>,
    pub lle_trace: Vec<LleTraceRow>,
}

/// DEER on Langevin dynamics in the golden two-well potential.
pub fn twowell(cfg: &ExperimentConfig) -> Result<TwoWellOutput, CliError> {
    let horizons = cfg
        .grid
        .horizons
        .clone()
        .unwrap_or_else(|| DEFAULT_TWOWELL_HORIZONS.to_vec());
    let seeds = seeds_or(cfg, DEFAULT_TWOWELL_SEEDS);
    let base = SolverConfig {
        track_lle: true,
        ..cfg.solver_config()
    };
    let mut points: Vec<(usize, u64)> = Vec::new();
    for &t in &horizons {
        points.extend(seeds.iter().map(|&s| (t, s)));
    }
    let results: Vec<(TwoWellRow, Vec<LleTraceRow>)> = points
        .par_iter()
        .map(|&(t, seed)| {
            let model = two_well(TwoWellParams::golden(), t, seed);
            let truth = sequential_rollout(&model, &GOLDEN_S0, t)?;
            let lambda = estimate_lle_along(&model, &truth, &LleOptions::seeded(seed))
                .map(|e| e.lambda)
                .unwrap_or(f64::NAN);
            let run = run_point(
                Method::Deer,
                &model,
                &GOLDEN_S0,
                &SolverConfig {
                    seed,
                    ..base.clone()
                },
            );
            log::info!(
                "T={t} seed={seed}: lambda={lambda:.4} steps={} converged={}",
                run.steps,
                run.converged
            );
            let trace = run
                .per_iter_lle
                .iter()
                .flatten()
                .enumerate()
                .map(|(iteration, &lle)| LleTraceRow {
                    schema_version: SCHEMA_VERSION,
                    horizon: t,
                    seed,
                    iteration,
                    lle,
                })
                .collect();
            let row = TwoWellRow {
                schema_version: SCHEMA_VERSION,
                horizon: t,
                seed,
                steps: run.steps,
                lambda,
                converged: run.converged,
            };
            Ok((row, trace))
        })
        .collect::<Result<_, CliError>>()?;
    let (rows, traces): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(TwoWellOutput {
        rows,
        lle_trace: traces.into_iter().flatten().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverRow {
    pub schema_version: u32,
    pub flow: String,
    pub mode: String,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub seed: u64,
    /// Per unit time.
    pub lambda: f64,
    pub steps: usize,
    pub converged: bool,
    pub final_merit: f64,
}

/// DEER on chaotic flows and on observers driven by them. System runs are
/// capped at `grid.system_max_iters` iterations.
pub fn observer(cfg: &ExperimentConfig) -> Result<Vec<ObserverRow>, CliError> {
    let mut flows = cfg
        .grid
        .flows
        .clone()
        .unwrap_or_else(|| vec![FlowName::Lorenz, FlowName::Rossler]);
    flows.sort();
    flows.dedup();
    let mut modes = cfg
        .grid
        .modes
        .clone()
        .unwrap_or_else(|| vec![FlowMode::System, FlowMode::Observer]);
    modes.sort();
    modes.dedup();
    let horizons = cfg
        .grid
        .horizons
        .clone()
        .unwrap_or_else(|| vec![DEFAULT_OBSERVER_HORIZON]);
    let seeds = seeds_or(cfg, 1);
    let system_cap = cfg.grid.system_max_iters.unwrap_or(DEFAULT_SYSTEM_MAX_ITERS);
    let base = cfg.solver_config();
    let dt = parseq_core::systems::DEFAULT_DT;

    let mut points: Vec<(FlowName, usize, u64, FlowMode)> = Vec::new();
    for &f in &flows {
        for &t in &horizons {
            for &s in &seeds {
                points.extend(modes.iter().map(|&m| (f, t, s, m)));
            }
        }
    }
    points
        .par_iter()
        .map(|&(name, t, seed, mode)| {
            let flow = name.flow();
            let pair = observer_pair(flow, dt, t, seed, flow.default_style(), None)?;
            let lle_opts = LleOptions::seeded(seed);
            let (model, s0, truth): (&dyn DynamicsModel, &[f64], Trajectory) = match mode {
                FlowMode::System => (&pair.system, &pair.system_s0, pair.reference.clone()),
                FlowMode::Observer => (
                    &pair.observer,
                    &pair.observer_s0,
                    sequential_rollout(&pair.observer, &pair.observer_s0, t)?,
                ),
            };
            let lambda = estimate_lle_along(model, &truth, &lle_opts)
                .map(|e| e.lambda / dt)
                .unwrap_or(f64::NAN);
            let mut scfg = SolverConfig {
                seed,
                ..base.clone()
            };
            if mode == FlowMode::System {
                scfg.max_iters = Some(scfg.max_iters.map_or(system_cap, |m| m.min(system_cap)));
            }
            let run = run_point(Method::Deer, model, s0, &scfg);
            log::info!(
                "{} {} T={t} seed={seed}: lambda={lambda:.4} steps={} converged={}",
                flow.name(),
                mode.name(),
                run.steps,
                run.converged
            );
            Ok(ObserverRow {
                schema_version: SCHEMA_VERSION,
                flow: flow.name().to_string(),
                mode: mode.name().to_string(),
                horizon: t,
                seed,
                lambda,
                steps: run.steps,
                converged: run.converged,
                final_merit: run.final_merit,
            })
        })
        .collect()
}
