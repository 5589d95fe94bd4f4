//! Text tables, JSON artifacts and plot series for finished runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::master::{ExpansionPlan, ModelStats, MEUR};
use crate::planner::{ConvergenceTrace, Mode, PlanResult, PlannerConfig};

/// Tolerance used when checking a series for a falling lower bound.
pub const SERIES_MONOTONE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub instance: String,
    pub config: PlannerConfig,
    pub result: PlanResult,
    pub elapsed_s: f64,
    /// Size of the last master model built.
    pub master_stats: ModelStats,
}

impl RunReport {
    pub fn new(instance: impl Into<String>, config: &PlannerConfig, result: PlanResult) -> Self {
        Self {
            mode: result.mode,
            instance: instance.into(),
            config: config.clone(),
            elapsed_s: result.elapsed_s,
            master_stats: result.master_stats,
            result,
        }
    }

    /// Summary block printed by the CLI. Always carries the gap.
    pub fn summary(&self) -> String {
        let r = &self.result;
        let mut s = String::new();
        let _ = writeln!(s, "instance:   {}", self.instance);
        let _ = writeln!(s, "mode:       {}", self.mode);
        let _ = writeln!(
            s,
            "status:     {}",
            if r.converged { "converged" } else { "NOT CONVERGED" }
        );
        let _ = writeln!(s, "iterations: {}", r.iterations);
        let _ = writeln!(s, "gap:        {:.6}", r.gap);
        let _ = writeln!(s, "objective:  {} M€", meur(r.objective_npv_eur, 3));
        let _ = writeln!(s, "investment: {} M€", meur(r.plan.invest_cost_npv_eur, 3));
        let _ = writeln!(
            s,
            "master:     {} continuous, {} discrete, {} constraints",
            self.master_stats.continuous, self.master_stats.discrete, self.master_stats.constraints
        );
        let _ = writeln!(s, "elapsed:    {:.2} s", self.elapsed_s);
        s
    }
}

fn meur(eur: f64, precision: usize) -> String {
    let v = eur / MEUR;
    // avoid "-0.000"
    let v = if v.abs() < 0.5 * 10f64.powi(-(precision as i32)) { 0.0 } else { v };
    format!("{v:.precision$}")
}

/// Iteration table with default precision (3 decimals, M€).
pub fn render_trace(trace: &ConvergenceTrace) -> String {
    render_trace_with(trace, 3)
}

/// One column per iteration. Rows: operating cost per period, investment,
/// bounds and relative error.
pub fn render_trace_with(trace: &ConvergenceTrace, precision: usize) -> String {
    let recs = &trace.iterations;
    if recs.is_empty() {
        return String::from("(empty trace)\n");
    }
    let periods = &recs[0].periods;
    let mut rows: Vec<(String, Vec<String>)> = Vec::new();
    for (i, t) in periods.iter().enumerate() {
        let label = if periods.len() == 1 {
            "c_op".to_string()
        } else {
            format!("c_op({t})")
        };
        rows.push((
            label,
            recs.iter()
                .map(|r| r.c_op_eur.get(i).map(|v| meur(*v, precision)).unwrap_or_default())
                .collect(),
        ));
    }
    rows.push(("c_in".into(), recs.iter().map(|r| meur(r.c_in_eur, precision)).collect()));
    rows.push(("z_up".into(), recs.iter().map(|r| meur(r.z_up_eur, precision)).collect()));
    rows.push(("z_lo".into(), recs.iter().map(|r| meur(r.z_lo_eur, precision)).collect()));
    rows.push((
        "error".into(),
        recs.iter().map(|r| format!("{:.4}", r.error.max(0.0))).collect(),
    ));

    let head: Vec<String> = recs.iter().map(|r| format!("nu={}", r.iteration)).collect();
    let lw = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(4);
    let cw = rows
        .iter()
        .flat_map(|(_, c)| c.iter().map(|s| s.len()))
        .chain(head.iter().map(|s| s.len()))
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let _ = write!(out, "{:<lw$}", "");
    for h in &head {
        let _ = write!(out, "  {h:>cw$}");
    }
    out.push('\n');
    for (label, cells) in &rows {
        let _ = write!(out, "{label:<lw$}");
        for c in cells {
            let _ = write!(out, "  {c:>cw$}");
        }
        out.push('\n');
    }
    out
}

pub fn render_plan(plan: &ExpansionPlan) -> String {
    let mut out = String::new();
    if plan.builds.is_empty() {
        out.push_str("no investment\n");
    } else {
        let _ = writeln!(out, "{:>6}  {:>9}  {:>6}  {:>12}  {:>12}", "line", "corridor", "period", "cost M€", "npv M€");
        for b in &plan.builds {
            let _ = writeln!(
                out,
                "{:>6}  {:>9}  {:>6}  {:>12}  {:>12}",
                b.line.to_string(),
                b.corridor,
                b.period,
                meur(b.cost_eur, 3),
                meur(b.npv_eur, 3)
            );
        }
    }
    let _ = writeln!(out, "total NPV investment: {} M€", meur(plan.invest_cost_npv_eur, 3));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub iteration: usize,
    pub z_up_eur: f64,
    pub z_lo_eur: f64,
    pub error: f64,
}

pub fn series(trace: &ConvergenceTrace) -> Vec<SeriesPoint> {
    trace
        .iterations
        .iter()
        .map(|r| SeriesPoint {
            iteration: r.iteration,
            z_up_eur: r.z_up_eur,
            z_lo_eur: r.z_lo_eur,
            error: r.error,
        })
        .collect()
}

/// CSV of the bound series. Refuses a series whose lower bound falls.
pub fn emit_series(trace: &ConvergenceTrace) -> Result<String> {
    let pts = series(trace);
    for w in pts.windows(2) {
        if w[1].z_lo_eur < w[0].z_lo_eur - SERIES_MONOTONE_TOL * w[0].z_lo_eur.abs().max(1.0) {
            return Err(Error::Contract(format!(
                "lower bound fell at iteration {}",
                w[1].iteration
            )));
        }
    }
    let mut wr = csv::Writer::from_writer(Vec::new());
    for p in &pts {
        wr.serialize(p).map_err(|e| Error::Backend(format!("csv: {e}")))?;
    }
    if pts.is_empty() {
        wr.write_record(["iteration", "z_up_eur", "z_lo_eur", "error"])
            .map_err(|e| Error::Backend(format!("csv: {e}")))?;
    }
    let bytes = wr.into_inner().map_err(|e| Error::Backend(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_series(text: &str) -> Result<Vec<SeriesPoint>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    rd.deserialize()
        .map(|r| {
            r.map_err(|e| Error::Parse {
                origin: "series".into(),
                message: e.to_string(),
            })
        })
        .collect()
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report types serialize")
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })
}

/// Writes `plan.json`, `trace.json`, `trace.txt`, `series.csv` and
/// `report.json` under `dir`. Returns the paths written.
pub fn write_run(dir: &Path, report: &RunReport) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let r = &report.result;

    #[derive(Serialize)]
    struct PlanDoc<'a> {
        mode: Mode,
        converged: bool,
        gap: f64,
        objective_npv_eur: f64,
        plan: &'a ExpansionPlan,
        c_op_eur: &'a [f64],
        worst: &'a [crate::adversary::AdversaryResult],
    }
    let plan_doc = PlanDoc {
        mode: r.mode,
        converged: r.converged,
        gap: r.gap,
        objective_npv_eur: r.objective_npv_eur,
        plan: &r.plan,
        c_op_eur: &r.evaluation.c_op_eur,
        worst: &r.evaluation.worst,
    };

    let mut txt = report.summary();
    txt.push('\n');
    txt.push_str(&render_plan(&r.plan));
    if r.stages.is_empty() {
        txt.push('\n');
        txt.push_str(&render_trace(&r.trace));
    } else {
        for s in &r.stages {
            let _ = writeln!(txt, "\nstage t={}{}", s.period, if s.converged { "" } else { " (not converged)" });
            txt.push_str(&render_trace(&s.trace));
        }
    }

    let files = [
        ("plan.json", to_json(&plan_doc)),
        ("trace.json", to_json(&r.trace)),
        ("trace.txt", txt),
        ("series.csv", emit_series(&r.trace)?),
        ("report.json", to_json(report)),
    ];
    let mut out = Vec::new();
    for (name, body) in files {
        let p = dir.join(name);
        write(p.clone(), &body)?;
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::IterationRecord;
    use proptest::prelude::*;

    fn rec(it: usize, z_up: f64, z_lo: f64, periods: Vec<usize>) -> IterationRecord {
        IterationRecord {
            iteration: it,
            c_in_eur: 1.5e6,
            c_op_eur: periods.iter().map(|t| *t as f64 * 1e6).collect(),
            periods,
            z_up_candidate_eur: z_up,
            z_up_eur: z_up,
            z_lo_eur: z_lo,
            error: (z_up - z_lo) / z_up,
            certificate_residual: 0.0,
            big_m_retries: 0,
            master_stats: ModelStats::default(),
        }
    }

    #[test]
    fn single_iteration_table() {
        let t = ConvergenceTrace {
            iterations: vec![rec(1, 2e6, 2e6, vec![1])],
        };
        let s = render_trace(&t);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].contains("nu=1"));
        assert!(lines[1].starts_with("c_op ") && lines[1].ends_with("1.000"));
        assert!(lines[2].ends_with("1.500"));
        assert!(lines[5].starts_with("error") && lines[5].ends_with("0.0000"));
        assert_eq!(s, render_trace(&t));
    }

    #[test]
    fn per_period_rows_in_multi_period_trace() {
        let t = ConvergenceTrace {
            iterations: vec![rec(1, 5e6, 0.0, vec![1, 2, 3]), rec(2, 4e6, 4e6, vec![1, 2, 3])],
        };
        let s = render_trace(&t);
        assert!(s.contains("c_op(3)"));
        assert_eq!(s.lines().next().unwrap().matches("nu=").count(), 2);
        assert_eq!(render_trace_with(&t, 2).lines().nth(5).unwrap().trim_end().rsplit(' ').next(), Some("4.00"));
    }

    #[test]
    fn empty_plan() {
        let s = render_plan(&ExpansionPlan::empty(3));
        assert!(s.starts_with("no investment"));
        assert!(s.contains("total NPV investment: 0.000 M€"));
    }

    #[test]
    fn series_rejects_falling_lower_bound() {
        let t = ConvergenceTrace {
            iterations: vec![rec(1, 5e6, 3e6, vec![1]), rec(2, 5e6, 2e6, vec![1])],
        };
        assert!(matches!(emit_series(&t), Err(Error::Contract(_))));
    }

    #[test]
    fn converged_series_ends_within_tolerance() {
        let t = ConvergenceTrace {
            iterations: vec![rec(1, 5e6, 0.0, vec![1]), rec(2, 4e6, 4e6, vec![1])],
        };
        let pts = parse_series(&emit_series(&t).unwrap()).unwrap();
        assert_eq!(pts.len(), 2);
        assert!(pts.last().unwrap().error <= 1e-4);
    }

    proptest! {
        #[test]
        fn series_round_trips(steps in proptest::collection::vec((0.0f64..1e9, 0.0f64..1e9), 1..12)) {
            let mut lo = 0.0;
            let mut iters = Vec::new();
            for (i, (dlo, extra)) in steps.iter().enumerate() {
                lo += dlo;
                iters.push(rec(i + 1, lo + extra + 1.0, lo, vec![1]));
            }
            let t = ConvergenceTrace { iterations: iters };
            let text = emit_series(&t).unwrap();
            prop_assert_eq!(parse_series(&text).unwrap(), series(&t));
            prop_assert_eq!(render_trace(&t), render_trace(&t));
        }
    }
}
