//! Column-and-constraint generation driver and the two myopic baselines.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{rel_diff, solve_worst_case, AdversaryResult};
use crate::dispatch::{worst_case_bruteforce, Topology};
use crate::error::{Error, Result};
use crate::master::{solve_master, CutSet, ExpansionPlan, MasterLayout, ModelStats};
use crate::milp::SolveOptions;
use crate::netmodel::{LineId, Network};
use crate::uncertainty::{choice_count, UncertaintySetPeriod, ENUMERATION_CAP};

pub const ORACLE_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Static,
    Sequential,
    Dynamic,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Static => "static",
            Mode::Sequential => "sequential",
            Mode::Dynamic => "dynamic",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Mode::Static),
            "sequential" => Ok(Mode::Sequential),
            "dynamic" => Ok(Mode::Dynamic),
            _ => Err(Error::Validation(format!(
                "unknown mode {s:?}; expected static, sequential or dynamic"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub mode: Mode,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub solver: SolveOptions,
    /// Concurrent adversary solves; 0 picks min(periods, available cores).
    pub threads: usize,
    /// Cross-check every adversary solve against enumeration when it fits the cap.
    pub oracle_check: bool,
    pub oracle_cap: u128,
    /// Wall-clock budget for the whole run, seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_limit_s: Option<f64>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Dynamic,
            epsilon: 1e-4,
            max_iterations: 50,
            solver: SolveOptions::default(),
            threads: 0,
            oracle_check: false,
            oracle_cap: ENUMERATION_CAP,
            time_limit_s: None,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Validation("epsilon must be > 0".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Validation("max_iterations must be >= 1".into()));
        }
        if matches!(self.time_limit_s, Some(t) if !(t > 0.0)) {
            return Err(Error::Validation("time limit must be > 0".into()));
        }
        Ok(())
    }

    /// Solver options with the backend time limit cut to what is left of
    /// the run budget.
    fn solver_at(&self, start: Instant) -> Result<SolveOptions> {
        let mut o = self.solver.clone();
        if let Some(limit_s) = self.time_limit_s {
            let left = limit_s - start.elapsed().as_secs_f64();
            if left <= 0.0 {
                return Err(Error::TimeLimit { limit_s });
            }
            o.time_limit_s = Some(o.time_limit_s.map_or(left, |t| t.min(left)));
        }
        Ok(o)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Discounted investment of the master plan.
    pub c_in_eur: f64,
    /// Worst-case operational cost per evaluated period (undiscounted).
    pub c_op_eur: Vec<f64>,
    /// Periods the entries of `c_op_eur` refer to.
    pub periods: Vec<usize>,
    /// Upper bound candidate from this iteration's plan.
    pub z_up_candidate_eur: f64,
    /// Best upper bound so far.
    pub z_up_eur: f64,
    pub z_lo_eur: f64,
    pub error: f64,
    /// Largest relative gap between adversary value and re-dispatch.
    pub certificate_residual: f64,
    pub big_m_retries: usize,
    pub master_stats: ModelStats,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub iterations: Vec<IterationRecord>,
}

impl ConvergenceTrace {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.iterations.last()
    }

    pub fn final_error(&self) -> f64 {
        self.last().map(|r| r.error).unwrap_or(f64::INFINITY)
    }

    /// Checks the bound discipline: lower bounds never fall, best upper bounds
    /// never rise, and upper stays above lower, all within `tol` relative.
    pub fn check_bounds(&self, tol: f64) -> std::result::Result<(), String> {
        for w in self.iterations.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if b.z_lo_eur < a.z_lo_eur - tol * a.z_lo_eur.abs().max(1.0) {
                return Err(format!("z_lo fell at iteration {}", b.iteration));
            }
            if b.z_up_eur > a.z_up_eur + tol * a.z_up_eur.abs().max(1.0) {
                return Err(format!("z_up rose at iteration {}", b.iteration));
            }
        }
        for r in &self.iterations {
            if r.z_lo_eur > r.z_up_eur + tol * r.z_up_eur.abs().max(1.0) {
                return Err(format!("z_lo above z_up at iteration {}", r.iteration));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub period: usize,
    pub converged: bool,
    pub trace: ConvergenceTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEvaluation {
    pub objective_npv_eur: f64,
    pub invest_npv_eur: f64,
    /// Worst-case operational cost per period, undiscounted.
    pub c_op_eur: Vec<f64>,
    pub worst: Vec<AdversaryResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub mode: Mode,
    pub plan: ExpansionPlan,
    /// Plan cost under the full multi-period objective.
    pub objective_npv_eur: f64,
    pub converged: bool,
    pub gap: f64,
    pub iterations: usize,
    pub trace: ConvergenceTrace,
    /// Per-period sub-runs of the sequential mode.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageTrace>,
    /// Worst-case realizations per period at the final plan.
    pub evaluation: PlanEvaluation,
    pub master_stats: ModelStats,
    pub elapsed_s: f64,
}

fn relative_gap(z_up: f64, z_lo: f64) -> f64 {
    if z_up.abs() <= 1e-9 {
        0.0
    } else {
        (z_up - z_lo) / z_up.abs()
    }
}

fn pool(config: &PlannerConfig, jobs: usize) -> Result<rayon::ThreadPool> {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let n = match config.threads {
        0 => jobs.min(cores),
        n => n,
    }
    .max(1);
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Backend(format!("thread pool: {e}")))
}

/// One adversary solve, optionally cross-checked against enumeration.
fn adversary(
    net: &Network,
    topo: &Topology,
    uset: &UncertaintySetPeriod,
    t: usize,
    config: &PlannerConfig,
    start: Instant,
) -> Result<AdversaryResult> {
    let r = solve_worst_case(net, topo, uset, t, &config.solver_at(start)?)?;
    if config.oracle_check {
        if choice_count(uset) <= config.oracle_cap {
            let (oracle, _) = worst_case_bruteforce(net, topo, uset, t, &config.solver_at(start)?)?;
            if rel_diff(r.worst_cost_eur, oracle) > ORACLE_TOL {
                return Err(Error::OracleMismatch {
                    period: t,
                    adversary_eur: r.worst_cost_eur,
                    oracle_eur: oracle,
                });
            }
        } else {
            log::warn!(
                "period {t}: {} choices exceed the oracle cap, skipping cross-check",
                choice_count(uset)
            );
        }
    }
    Ok(r)
}

fn check_sets(net: &Network, usets: &[UncertaintySetPeriod]) -> Result<()> {
    let n = net.horizon().n_periods;
    if usets.len() != n {
        return Err(Error::Contract(format!(
            "{} uncertainty sets for {n} periods",
            usets.len()
        )));
    }
    for (i, u) in usets.iter().enumerate() {
        if u.period != i + 1 {
            return Err(Error::Contract(format!(
                "uncertainty set {} is labelled period {}",
                i + 1,
                u.period
            )));
        }
        u.validate()?;
    }
    Ok(())
}

/// Worst-case cost of a fixed plan in every period.
pub fn evaluate_plan(
    net: &Network,
    usets: &[UncertaintySetPeriod],
    plan: &ExpansionPlan,
    config: &PlannerConfig,
) -> Result<PlanEvaluation> {
    evaluate_from(net, usets, plan, config, Instant::now())
}

fn evaluate_from(
    net: &Network,
    usets: &[UncertaintySetPeriod],
    plan: &ExpansionPlan,
    config: &PlannerConfig,
    start: Instant,
) -> Result<PlanEvaluation> {
    check_sets(net, usets)?;
    let n = net.horizon().n_periods;
    let pool = pool(config, n)?;
    let worst: Vec<AdversaryResult> = pool.install(|| {
        (1..=n)
            .into_par_iter()
            .map(|t| adversary(net, &plan.topology(net, t)?, &usets[t - 1], t, config, start))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut objective = plan.invest_cost_npv_eur;
    for r in &worst {
        objective += net.discount_factor(r.period)? * r.worst_cost_eur;
    }
    Ok(PlanEvaluation {
        objective_npv_eur: objective,
        invest_npv_eur: plan.invest_cost_npv_eur,
        c_op_eur: worst.iter().map(|r| r.worst_cost_eur).collect(),
        worst,
    })
}

pub fn plan(net: &Network, usets: &[UncertaintySetPeriod], config: &PlannerConfig) -> Result<PlanResult> {
    match config.mode {
        Mode::Dynamic => plan_dynamic(net, usets, config),
        Mode::Static => plan_static(net, usets, config),
        Mode::Sequential => plan_sequential(net, usets, config),
    }
}

enum Step {
    Continue,
    Converged,
    Stalled,
}

/// Fully integrated multi-period planning.
pub fn plan_dynamic(
    net: &Network,
    usets: &[UncertaintySetPeriod],
    config: &PlannerConfig,
) -> Result<PlanResult> {
    config.validate()?;
    check_sets(net, usets)?;
    let start = Instant::now();
    let n = net.horizon().n_periods;
    let pool = pool(config, n)?;
    let mut cuts = CutSet::new(n);
    let mut trace = ConvergenceTrace::default();
    let mut best: Option<(ExpansionPlan, Vec<AdversaryResult>)> = None;
    let mut z_up = f64::INFINITY;
    let mut converged = false;
    let mut stats = ModelStats::default();

    for nu in 1..=config.max_iterations {
        let mut step = || -> Result<Step> {
            let m = solve_master(net, &MasterLayout::Dynamic, &cuts, &config.solver_at(start)?)?;
            stats = m.stats;
            let worst: Vec<AdversaryResult> = pool.install(|| {
                (1..=n)
                    .into_par_iter()
                    .map(|t| adversary(net, &m.plan.topology(net, t)?, &usets[t - 1], t, config, start))
                    .collect::<Result<Vec<_>>>()
            })?;
            let mut cand = m.plan.invest_cost_npv_eur;
            for r in &worst {
                cand += net.discount_factor(r.period)? * r.worst_cost_eur;
            }
            if cand < z_up {
                z_up = cand;
                best = Some((m.plan.clone(), worst.clone()));
            }
            let z_lo = m.bound_eur;
            let error = relative_gap(z_up, z_lo);
            trace.iterations.push(IterationRecord {
                iteration: nu,
                c_in_eur: m.plan.invest_cost_npv_eur,
                c_op_eur: worst.iter().map(|r| r.worst_cost_eur).collect(),
                periods: (1..=n).collect(),
                z_up_candidate_eur: cand,
                z_up_eur: z_up,
                z_lo_eur: z_lo,
                error,
                certificate_residual: worst.iter().map(|r| r.certificate_residual()).fold(0.0, f64::max),
                big_m_retries: worst.iter().map(|r| r.big_m_retries).sum(),
                master_stats: m.stats,
            });
            log::info!("iteration {nu}: z_lo {z_lo:.3} z_up {z_up:.3} error {error:.3e}");
            if error <= config.epsilon {
                return Ok(Step::Converged);
            }
            let reals: Vec<_> = worst.into_iter().map(|r| r.realization).collect();
            if cuts.contains(&reals) {
                log::warn!("iteration {nu}: worst cases repeat an existing cut; stopping at error {error:.3e}");
                return Ok(Step::Stalled);
            }
            cuts.append(nu, reals)?;
            Ok(Step::Continue)
        };
        match step().map_err(|e| e.at_iteration(nu))? {
            Step::Converged => {
                converged = true;
                break;
            }
            Step::Stalled => break,
            Step::Continue => {}
        }
    }

    let (plan, worst) = best.expect("at least one iteration ran");
    let evaluation = PlanEvaluation {
        objective_npv_eur: z_up,
        invest_npv_eur: plan.invest_cost_npv_eur,
        c_op_eur: worst.iter().map(|r| r.worst_cost_eur).collect(),
        worst,
    };
    Ok(PlanResult {
        mode: Mode::Dynamic,
        plan,
        objective_npv_eur: z_up,
        converged,
        gap: trace.final_error(),
        iterations: trace.len(),
        trace,
        stages: Vec::new(),
        evaluation,
        master_stats: stats,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

/// Result of one single-epoch robust expansion.
struct EpochRun {
    builds: Vec<LineId>,
    converged: bool,
    trace: ConvergenceTrace,
    stats: ModelStats,
}

/// CCG for a single build decision against one uncertainty set.
/// `net` already contains earlier builds as existing lines.
#[allow(clippy::too_many_arguments)]
fn run_epoch(
    net: &Network,
    uset: &UncertaintySetPeriod,
    build_period: usize,
    eval_period: usize,
    invest_weight: f64,
    op_weight: f64,
    budget_discount: f64,
    budget_left_eur: f64,
    config: &PlannerConfig,
    start: Instant,
) -> Result<EpochRun> {
    let layout = MasterLayout::SingleEpoch {
        build_period,
        eval_period,
        invest_weight,
        op_weight,
        budget_discount,
        budget_left_eur,
    };
    let mut cuts = CutSet::new(1);
    let mut trace = ConvergenceTrace::default();
    let mut z_up = f64::INFINITY;
    let mut best: Vec<LineId> = Vec::new();
    let mut stats = ModelStats::default();
    let mut converged = false;

    for nu in 1..=config.max_iterations {
        let m = config
            .solver_at(start)
            .and_then(|o| solve_master(net, &layout, &cuts, &o))
            .map_err(|e| e.at_iteration(nu))?;
        stats = m.stats;
        let built = m.plan.final_lines();
        let topo = Topology::with_built(net, &built)?;
        let r = adversary(net, &topo, uset, eval_period, config, start).map_err(|e| e.at_iteration(nu))?;
        let c_in: f64 = built
            .iter()
            .map(|id| net.line(*id).map(|l| l.build_cost_eur).unwrap_or(0.0))
            .sum();
        let cand = invest_weight * c_in + op_weight * r.worst_cost_eur;
        if cand < z_up {
            z_up = cand;
            best = built;
        }
        let z_lo = m.bound_eur;
        let error = relative_gap(z_up, z_lo);
        trace.iterations.push(IterationRecord {
            iteration: nu,
            c_in_eur: c_in,
            c_op_eur: vec![r.worst_cost_eur],
            periods: vec![eval_period],
            z_up_candidate_eur: cand,
            z_up_eur: z_up,
            z_lo_eur: z_lo,
            error,
            certificate_residual: r.certificate_residual(),
            big_m_retries: r.big_m_retries,
            master_stats: m.stats,
        });
        if error <= config.epsilon {
            converged = true;
            break;
        }
        let reals = vec![r.realization];
        if cuts.contains(&reals) {
            log::warn!("epoch {build_period}, iteration {nu}: repeated worst case, stopping");
            break;
        }
        cuts.append(nu, reals)?;
    }
    Ok(EpochRun {
        builds: best,
        converged,
        trace,
        stats,
    })
}

/// Single build decision at t = 1 designed against the last period's set.
///
/// The design objective is annual: investment spread evenly over the
/// horizon plus one year of final-set operating cost. The trace keeps those
/// units; the returned objective is the plan re-evaluated with the
/// per-period sets under the discounted horizon objective.
pub fn plan_static(
    net: &Network,
    usets: &[UncertaintySetPeriod],
    config: &PlannerConfig,
) -> Result<PlanResult> {
    config.validate()?;
    check_sets(net, usets)?;
    let start = Instant::now();
    let n = net.horizon().n_periods;
    let run = run_epoch(
        net,
        &usets[n - 1],
        1,
        n,
        1.0 / n as f64,
        1.0,
        1.0,
        net.horizon().budget_eur,
        config,
        start,
    )?;
    let builds: BTreeMap<LineId, usize> = run.builds.iter().map(|&id| (id, 1)).collect();
    let plan = ExpansionPlan::from_builds(net, &builds)?;
    let evaluation = evaluate_from(net, usets, &plan, config, start)?;
    Ok(PlanResult {
        mode: Mode::Static,
        objective_npv_eur: evaluation.objective_npv_eur,
        plan,
        converged: run.converged,
        gap: run.trace.final_error(),
        iterations: run.trace.len(),
        trace: run.trace,
        stages: Vec::new(),
        evaluation,
        master_stats: run.stats,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

/// Period-by-period expansion, each period blind to the ones after it.
/// Every stage uses the annual objective of [`plan_static`] against its own
/// set; the budget row counts discounted spending so far.
pub fn plan_sequential(
    net: &Network,
    usets: &[UncertaintySetPeriod],
    config: &PlannerConfig,
) -> Result<PlanResult> {
    config.validate()?;
    check_sets(net, usets)?;
    let start = Instant::now();
    let n = net.horizon().n_periods;
    let mut builds: BTreeMap<LineId, usize> = BTreeMap::new();
    let mut spent = 0.0;
    let mut stages = Vec::with_capacity(n);
    let mut stats = ModelStats::default();

    for t in 1..=n {
        let fixed: Vec<LineId> = builds.keys().copied().collect();
        let net_t = net.with_prebuilt(&fixed)?;
        let disc = net.discount_factor(t)?;
        let run = run_epoch(
            &net_t,
            &usets[t - 1],
            t,
            t,
            1.0 / n as f64,
            1.0,
            disc,
            net.horizon().budget_eur - spent,
            config,
            start,
        )?;
        for id in &run.builds {
            builds.insert(*id, t);
            spent += disc * net.line(*id).map(|l| l.build_cost_eur).unwrap_or(0.0);
        }
        stats = run.stats;
        stages.push(StageTrace {
            period: t,
            converged: run.converged,
            trace: run.trace,
        });
    }

    let plan = ExpansionPlan::from_builds(net, &builds)?;
    let evaluation = evaluate_from(net, usets, &plan, config, start)?;
    let converged = stages.iter().all(|s| s.converged);
    let gap = stages.iter().map(|s| s.trace.final_error()).fold(0.0, f64::max);
    let iterations = stages.iter().map(|s| s.trace.len()).sum();
    let trace = stages.last().map(|s| s.trace.clone()).unwrap_or_default();
    Ok(PlanResult {
        mode: Mode::Sequential,
        objective_npv_eur: evaluation.objective_npv_eur,
        plan,
        converged,
        gap,
        iterations,
        trace,
        stages,
        evaluation,
        master_stats: stats,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}
