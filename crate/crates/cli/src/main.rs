use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use parseq_cli::{run, worker_count, CliError, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "parseq", version, about = "Parallel evaluation of nonlinear state space models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output file; overrides the config's `output`. Stdout when neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; PARSEQ_WORKERS takes precedence.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sequential rollout as CSV.
    Rollout(Common),
    /// One solver run as a JSON report.
    Solve(Common),
    /// Largest Lyapunov exponent of the rollout.
    Lle(Common),
    /// Conditioning report and parallelizability verdict.
    Bounds(Common),
    /// Mean-field RNN sweep over gain, horizon and seed.
    Threshold(Common),
    /// DEER on the two-well Langevin sampler.
    Twowell(Common),
    /// DEER on chaotic flows and their observers.
    Observer(Common),
    /// Dense-oracle property suites.
    OracleCheck(Common),
}

impl Command {
    fn split(&self) -> (Experiment, &Common) {
        match self {
            Command::Rollout(c) => (Experiment::Rollout, c),
            Command::Solve(c) => (Experiment::Solve, c),
            Command::Lle(c) => (Experiment::Lle, c),
            Command::Bounds(c) => (Experiment::Bounds, c),
            Command::Threshold(c) => (Experiment::Threshold, c),
            Command::Twowell(c) => (Experiment::Twowell, c),
            Command::Observer(c) => (Experiment::Observer, c),
            Command::OracleCheck(c) => (Experiment::OracleCheck, c),
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let (experiment, args) = cli.command.split();
    let cfg = ExperimentConfig::from_path(&args.config)?;
    if cfg.experiment != experiment {
        return Err(CliError::Config(format!(
            "config is for `{}`, not `{experiment}`",
            cfg.experiment
        )));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_count(args.workers)? {
        pool = pool.num_threads(n);
    }
    pool.build()?.install(|| run(&cfg, args.out.as_deref()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(3);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_broken_pipe() => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
