use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Parser;
use tnep_core::planner::{plan, Mode, PlannerConfig};
use tnep_core::report::{render_plan, write_run, RunReport};
use tnep_core::{parse_instance, Error};

/// Solver options picked up from the environment, `key=value` separated by `;`.
const SOLVER_ENV: &str = "TNEP_SOLVER_OPTIONS";

#[derive(Debug, Parser)]
#[command(name = "tnep", version, about = "Multi-period robust transmission expansion planning")]
struct Args {
    /// Instance file (JSON).
    #[arg(long)]
    instance: PathBuf,

    #[arg(long, default_value = "dynamic", value_parser = ["static", "sequential", "dynamic"])]
    mode: String,

    /// Override the generation uncertainty budget.
    #[arg(long)]
    gamma_g: Option<u32>,

    /// Override the demand uncertainty budget.
    #[arg(long)]
    gamma_d: Option<u32>,

    /// Relative gap at which the bounds count as converged.
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,

    #[arg(long, default_value_t = 50)]
    max_iterations: usize,

    /// Output directory for plan.json, trace.json, trace.txt and series.csv.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Cross-check every worst-case solve by enumeration when small enough.
    #[arg(long)]
    oracle_check: bool,

    /// Write every LP/MILP built to this directory in LP format.
    #[arg(long)]
    debug_export: Option<PathBuf>,

    /// Concurrent per-period solves (default: min(periods, cores)).
    #[arg(long)]
    threads: Option<usize>,

    /// Backend option `key=value`; repeatable. Also read from TNEP_SOLVER_OPTIONS.
    #[arg(long = "solver-option")]
    solver_options: Vec<String>,

    /// Wall-clock budget for the whole run, seconds.
    #[arg(long)]
    time_limit: Option<f64>,

    /// Relative MIP gap passed to the backend.
    #[arg(long, default_value_t = 0.0)]
    mip_gap: f64,
}

fn config(args: &Args) -> anyhow::Result<PlannerConfig> {
    if !(args.epsilon > 0.0) {
        bail!("--epsilon must be > 0");
    }
    let mut cfg = PlannerConfig {
        mode: args.mode.parse::<Mode>()?,
        epsilon: args.epsilon,
        max_iterations: args.max_iterations,
        threads: args.threads.unwrap_or(0),
        oracle_check: args.oracle_check,
        time_limit_s: args.time_limit,
        ..PlannerConfig::default()
    };
    cfg.validate()?;
    cfg.solver.mip_rel_gap = args.mip_gap;
    cfg.solver.export_dir = args.debug_export.clone();
    let env = std::env::var(SOLVER_ENV).unwrap_or_default();
    for kv in env
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .chain(args.solver_options.iter().map(String::as_str))
    {
        cfg.solver.push_option(kv)?;
    }
    Ok(cfg)
}

fn run(args: &Args) -> anyhow::Result<bool> {
    let cfg = config(args)?;
    let inst = parse_instance(&args.instance)
        .with_context(|| format!("loading {}", args.instance.display()))?
        .with_gammas(args.gamma_g, args.gamma_d)?;
    let sets = inst.period_sets()?;
    let result = plan(&inst.network, &sets, &cfg)?;
    let report = RunReport::new(inst.name.clone(), &cfg, result);

    print!("{}", report.summary());
    println!();
    print!("{}", render_plan(&report.result.plan));
    if let Some(dir) = &args.out {
        let files = write_run(dir, &report)?;
        log::info!("wrote {} files under {}", files.len(), dir.display());
    }
    Ok(report.result.converged)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("warning: not converged within {} iterations", args.max_iterations);
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if let Some(Error::SolverConfig { hint, .. }) = e.downcast_ref::<Error>().map(Error::root) {
                eprintln!("hint: {hint}");
            }
            ExitCode::from(1)
        }
    }
}
