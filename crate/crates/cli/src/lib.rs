//! Experiment runner for parseq. A JSON config names an experiment, a system
//! and its solver settings; the runner writes CSV or JSON artifacts.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod suites;

use std::path::Path;

pub use config::{Experiment, ExperimentConfig, FlowMode, FlowName, Grid, SystemSpec};
pub use error::CliError;

pub const WORKERS_ENV: &str = "PARSEQ_WORKERS";

/// Worker budget: `PARSEQ_WORKERS` wins over the flag; `None` leaves the
/// rayon default.
pub fn worker_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    let n = match std::env::var(WORKERS_ENV) {
        Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
            CliError::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))
        })?),
        Err(_) => flag,
    };
    if n == Some(0) {
        return Err(CliError::Config("worker count must be at least 1".into()));
    }
    Ok(n)
}

/// Runs `cfg` and writes its artifact to `out`, falling back to the config's
/// output path and then stdout.
pub fn run(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<(), CliError> {
    let out = out.or(cfg.output.as_deref());
    match cfg.experiment {
        Experiment::Rollout => {
            let traj = experiments::rollout(cfg)?;
            output::write_trajectory_csv(&traj, experiments::SCHEMA_VERSION, out)?;
        }
        Experiment::Solve => {
            let res = experiments::solve_one(cfg)?;
            log::info!(
                "{}: {} iterations, converged={}, merit={:e}",
                res.method,
                res.report.iterations,
                res.report.converged,
                res.report.final_merit()
            );
            output::write_json(&res, out)?;
        }
        Experiment::Lle => output::write_json(&experiments::lle(cfg)?, out)?,
        Experiment::Bounds => {
            let res = experiments::bounds(cfg)?;
            println!("{}", res.report);
            if let Some(p) = out {
                output::write_json(&res, Some(p))?;
            }
        }
        Experiment::Threshold => output::write_csv(&experiments::threshold(cfg)?, out)?,
        Experiment::Twowell => {
            let res = experiments::twowell(cfg)?;
            output::write_csv(&res.rows, out)?;
            match out {
                Some(p) => output::write_csv(&res.lle_trace, Some(&output::sibling_path(p, "lle")))?,
                None => log::info!("no output path; per-iteration LLE series not written"),
            }
        }
        Experiment::Observer => output::write_csv(&experiments::observer(cfg)?, out)?,
        Experiment::OracleCheck => {
            let seed = cfg.grid.seeds.as_ref().and_then(|s| s.first()).copied().unwrap_or(0);
            let report = suites::run_all(seed)?;
            output::write_json(&report, out)?;
            if !report.passed {
                let failed: Vec<&str> = report
                    .suites
                    .iter()
                    .filter(|s| !s.passed)
                    .map(|s| s.name.as_str())
                    .collect();
                return Err(CliError::PropertyViolation(failed.join(", ")));
            }
        }
    }
    Ok(())
}
