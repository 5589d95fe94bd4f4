//! Thin LP/MILP modelling layer over HiGHS.
//!
//! Models are assembled in a [`ModelBuilder`], exported to CPLEX LP text on
//! request, solved with one HiGHS instance per call, and every optimal answer
//! is re-checked against the builder's own constraints.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use highs::{HighsModelStatus, RowProblem, Sense as HSense};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute-or-relative tolerance used when re-checking solutions.
pub const VERIFY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Con(usize);

impl Con {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
struct VarDef {
    name: String,
    lb: f64,
    ub: f64,
    kind: VarKind,
    obj: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct ConDef {
    name: String,
    terms: Vec<(Var, f64)>,
    cmp: Cmp,
    rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBuilder {
    name: String,
    sense: Sense,
    vars: Vec<VarDef>,
    cons: Vec<ConDef>,
    obj_offset: f64,
}

impl ModelBuilder {
    pub fn new(name: impl Into<String>, sense: Sense) -> Self {
        Self {
            name: name.into(),
            sense,
            vars: Vec::new(),
            cons: Vec::new(),
            obj_offset: 0.0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn continuous(&mut self, name: impl Into<String>, lb: f64, ub: f64) -> Var {
        self.add_var(name.into(), lb, ub, VarKind::Continuous)
    }

    pub fn binary(&mut self, name: impl Into<String>) -> Var {
        self.add_var(name.into(), 0.0, 1.0, VarKind::Binary)
    }

    fn add_var(&mut self, name: String, lb: f64, ub: f64, kind: VarKind) -> Var {
        debug_assert!(lb <= ub, "variable {name} has empty domain [{lb}, {ub}]");
        self.vars.push(VarDef {
            name,
            lb,
            ub,
            kind,
            obj: 0.0,
        });
        Var(self.vars.len() - 1)
    }

    /// Adds `coef` to the objective coefficient of `v`.
    pub fn add_obj(&mut self, v: Var, coef: f64) {
        self.vars[v.0].obj += coef;
    }

    pub fn add_obj_offset(&mut self, c: f64) {
        self.obj_offset += c;
    }

    pub fn obj_coef(&self, v: Var) -> f64 {
        self.vars[v.0].obj
    }

    pub fn bounds(&self, v: Var) -> (f64, f64) {
        (self.vars[v.0].lb, self.vars[v.0].ub)
    }

    pub fn var_name(&self, v: Var) -> &str {
        &self.vars[v.0].name
    }

    pub fn set_bounds(&mut self, v: Var, lb: f64, ub: f64) {
        self.vars[v.0].lb = lb;
        self.vars[v.0].ub = ub;
    }

    /// Adds a row. Repeated variables in `terms` are merged and zero
    /// coefficients dropped.
    pub fn constraint(
        &mut self,
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (Var, f64)>,
        cmp: Cmp,
        rhs: f64,
    ) -> Con {
        let mut t: Vec<(Var, f64)> = terms.into_iter().collect();
        t.sort_by_key(|(v, _)| *v);
        let mut merged: Vec<(Var, f64)> = Vec::with_capacity(t.len());
        for (v, c) in t {
            match merged.last_mut() {
                Some((lv, lc)) if *lv == v => *lc += c,
                _ => merged.push((v, c)),
            }
        }
        merged.retain(|(_, c)| *c != 0.0);
        self.cons.push(ConDef {
            name: name.into(),
            terms: merged,
            cmp,
            rhs,
        });
        Con(self.cons.len() - 1)
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn n_binary(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn n_continuous(&self) -> usize {
        self.n_vars() - self.n_binary()
    }

    pub fn n_constraints(&self) -> usize {
        self.cons.len()
    }

    pub fn is_mip(&self) -> bool {
        self.vars.iter().any(|v| v.kind == VarKind::Binary)
    }

    /// Objective value of an assignment, offset included.
    pub fn evaluate(&self, values: &[f64]) -> f64 {
        self.obj_offset
            + self
                .vars
                .iter()
                .zip(values)
                .map(|(v, x)| v.obj * x)
                .sum::<f64>()
    }

    /// Largest violation of any bound, row or integrality requirement, scaled
    /// by the magnitude of the quantities involved. Returns the offending item.
    pub fn max_violation(&self, values: &[f64]) -> (f64, String) {
        let mut worst = (0.0, String::new());
        let mut note = |viol: f64, what: &dyn Fn() -> String| {
            if viol > worst.0 {
                worst = (viol, what());
            }
        };
        for (v, &x) in self.vars.iter().zip(values) {
            let scale = 1.0f64.max(x.abs());
            note((v.lb - x).max(x - v.ub) / scale, &|| format!("bounds of {}", v.name));
            if v.kind == VarKind::Binary {
                note((x - x.round()).abs(), &|| format!("integrality of {}", v.name));
            }
        }
        for c in &self.cons {
            let mut lhs = 0.0;
            let mut mag = c.rhs.abs();
            for &(v, a) in &c.terms {
                lhs += a * values[v.0];
                mag += (a * values[v.0]).abs();
            }
            let scale = 1.0f64.max(mag);
            let viol = match c.cmp {
                Cmp::Le => lhs - c.rhs,
                Cmp::Ge => c.rhs - lhs,
                Cmp::Eq => (lhs - c.rhs).abs(),
            };
            note(viol / scale, &|| format!("row {}", c.name));
        }
        worst
    }

    /// CPLEX LP text. Identical builders give byte-identical text.
    pub fn to_lp_string(&self) -> String {
        let names = self.unique_names();
        let mut s = String::new();
        let _ = writeln!(s, "\\ model {}", sanitize(&self.name));
        if self.obj_offset != 0.0 {
            let _ = writeln!(s, "\\ objective offset {}", self.obj_offset);
        }
        s.push_str(match self.sense {
            Sense::Minimize => "Minimize\n",
            Sense::Maximize => "Maximize\n",
        });
        s.push_str(" obj:");
        let obj: Vec<(Var, f64)> = self
            .vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.obj != 0.0)
            .map(|(i, v)| (Var(i), v.obj))
            .collect();
        write_terms(&mut s, &obj, &names);
        s.push('\n');
        s.push_str("Subject To\n");
        for (i, c) in self.cons.iter().enumerate() {
            let _ = write!(s, " r{}_{}:", i, sanitize(&c.name));
            write_terms(&mut s, &c.terms, &names);
            let op = match c.cmp {
                Cmp::Le => "<=",
                Cmp::Eq => "=",
                Cmp::Ge => ">=",
            };
            let _ = writeln!(s, " {op} {}", c.rhs);
        }
        s.push_str("Bounds\n");
        for (v, n) in self.vars.iter().zip(&names) {
            if v.kind == VarKind::Binary {
                continue;
            }
            match (v.lb.is_finite(), v.ub.is_finite()) {
                (false, false) => {
                    let _ = writeln!(s, " {n} free");
                }
                (true, false) if v.lb == 0.0 => {}
                (true, false) => {
                    let _ = writeln!(s, " {n} >= {}", v.lb);
                }
                (false, true) => {
                    let _ = writeln!(s, " -inf <= {n} <= {}", v.ub);
                }
                (true, true) => {
                    let _ = writeln!(s, " {} <= {n} <= {}", v.lb, v.ub);
                }
            }
        }
        let bins: Vec<&String> = self
            .vars
            .iter()
            .zip(&names)
            .filter(|(v, _)| v.kind == VarKind::Binary)
            .map(|(_, n)| n)
            .collect();
        if !bins.is_empty() {
            s.push_str("Binaries\n");
            for n in bins {
                let _ = writeln!(s, " {n}");
            }
        }
        s.push_str("End\n");
        s
    }

    pub fn write_lp(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = dir.join(format!("{}.lp", sanitize(&self.name)));
        std::fs::write(&path, self.to_lp_string()).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    fn unique_names(&self) -> Vec<String> {
        self.vars
            .iter()
            .enumerate()
            .map(|(i, v)| format!("x{}_{}", i, sanitize(&v.name)))
            .collect()
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn write_terms(s: &mut String, terms: &[(Var, f64)], names: &[String]) {
    if terms.is_empty() {
        s.push_str(" 0");
        return;
    }
    for &(v, a) in terms {
        if a < 0.0 {
            let _ = write!(s, " - {} {}", -a, names[v.0]);
        } else {
            let _ = write!(s, " + {} {}", a, names[v.0]);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub mip_rel_gap: f64,
    pub feasibility_tol: f64,
    pub threads: u32,
    pub time_limit_s: Option<f64>,
    /// Raw `name=value` HiGHS options applied last.
    pub passthrough: Vec<(String, String)>,
    /// Writes every model as `<name>.lp` into this directory before solving.
    pub export_dir: Option<PathBuf>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            mip_rel_gap: 0.0,
            feasibility_tol: 1e-7,
            threads: 1,
            time_limit_s: None,
            passthrough: Vec::new(),
            export_dir: None,
        }
    }
}

impl SolveOptions {
    /// Parses `name=value` into a passthrough option.
    pub fn push_option(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec.split_once('=').ok_or_else(|| Error::SolverConfig {
            message: format!("malformed solver option {spec:?}"),
            hint: "use name=value, e.g. presolve=off".into(),
        })?;
        self.passthrough
            .push((k.trim().to_string(), v.trim().to_string()));
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Limit,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Objective recomputed from the primal values, offset included.
    pub objective: f64,
    pub values: Vec<f64>,
    /// Row duals as objective sensitivities to the right-hand side; LPs only.
    pub duals: Option<Vec<f64>>,
    pub mip_gap: f64,
}

impl SolveOutcome {
    pub fn value(&self, v: Var) -> f64 {
        self.values[v.0]
    }

    pub fn dual(&self, c: Con) -> Option<f64> {
        self.duals.as_ref().map(|d| d[c.0])
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

fn apply_option(model: &mut highs::Model, key: &str, value: &str) -> Result<()> {
    let r = if let Ok(b) = value.parse::<bool>() {
        model.try_set_option(key, b)
    } else if let Ok(i) = value.parse::<i32>() {
        // Integer-valued doubles such as time_limit=60 arrive here first.
        model
            .try_set_option(key, i)
            .or_else(|_| model.try_set_option(key, i as f64))
    } else if let Ok(f) = value.parse::<f64>() {
        model.try_set_option(key, f)
    } else {
        model.try_set_option(key, value)
    };
    r.map_err(|e| Error::SolverConfig {
        message: format!("HiGHS rejected option {key}={value}: {e:?}"),
        hint: "see the HiGHS option reference for valid names and types".into(),
    })
}

pub fn solve(mb: &ModelBuilder, opts: &SolveOptions) -> Result<SolveOutcome> {
    if let Some(dir) = &opts.export_dir {
        mb.write_lp(dir)?;
    }

    let mut pb = RowProblem::default();
    let cols: Vec<highs::Col> = mb
        .vars
        .iter()
        .map(|v| match v.kind {
            VarKind::Continuous => pb.add_column(v.obj, v.lb..=v.ub),
            VarKind::Binary => pb.add_integer_column(v.obj, v.lb..=v.ub),
        })
        .collect();
    for c in &mb.cons {
        let row = c.terms.iter().map(|&(v, a)| (cols[v.0], a));
        match c.cmp {
            Cmp::Le => pb.add_row(..=c.rhs, row),
            Cmp::Ge => pb.add_row(c.rhs.., row),
            Cmp::Eq => pb.add_row(c.rhs..=c.rhs, row),
        }
    }
    let sense = match mb.sense {
        Sense::Minimize => HSense::Minimise,
        Sense::Maximize => HSense::Maximise,
    };
    let mut model = pb
        .try_optimise(sense)
        .map_err(|s| Error::Backend(format!("HiGHS refused model {}: {s:?}", mb.name)))?;
    model.make_quiet();
    apply_option(&mut model, "threads", &opts.threads.max(1).to_string())?;
    model
        .try_set_option("mip_rel_gap", opts.mip_rel_gap)
        .and_then(|_| model.try_set_option("primal_feasibility_tolerance", opts.feasibility_tol))
        .and_then(|_| model.try_set_option("dual_feasibility_tolerance", opts.feasibility_tol))
        .map_err(|e| Error::SolverConfig {
            message: format!("HiGHS rejected a tolerance: {e:?}"),
            hint: "tolerances must be positive".into(),
        })?;
    if let Some(t) = opts.time_limit_s {
        apply_option(&mut model, "time_limit", &t.to_string())?;
    }
    for (k, v) in &opts.passthrough {
        apply_option(&mut model, k, v)?;
    }

    let solved = model
        .try_solve()
        .map_err(|s| Error::Backend(format!("HiGHS failed on {}: {s:?}", mb.name)))?;
    let status = match solved.status() {
        HighsModelStatus::Optimal => SolveStatus::Optimal,
        HighsModelStatus::ModelEmpty => SolveStatus::Optimal,
        HighsModelStatus::Infeasible => SolveStatus::Infeasible,
        HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => {
            SolveStatus::Unbounded
        }
        HighsModelStatus::ReachedTimeLimit
        | HighsModelStatus::ReachedIterationLimit
        | HighsModelStatus::ReachedSolutionLimit
        | HighsModelStatus::ReachedInterrupt
        | HighsModelStatus::ReachedMemoryLimit
        | HighsModelStatus::ObjectiveBound
        | HighsModelStatus::ObjectiveTarget => SolveStatus::Limit,
        _ => SolveStatus::Error,
    };
    if status != SolveStatus::Optimal {
        return Ok(SolveOutcome {
            status,
            objective: f64::NAN,
            values: Vec::new(),
            duals: None,
            mip_gap: f64::NAN,
        });
    }

    let sol = solved.get_solution();
    let mut values = sol.columns().to_vec();
    values.resize(mb.n_vars(), 0.0);
    for (x, v) in values.iter_mut().zip(&mb.vars) {
        if v.kind == VarKind::Binary {
            *x = x.round();
        }
    }
    let (viol, what) = mb.max_violation(&values);
    if viol > VERIFY_TOL {
        return Err(Error::Backend(format!(
            "solution of {} failed re-verification: {what} violated by {viol:e}",
            mb.name
        )));
    }
    let duals = if mb.is_mip() {
        None
    } else {
        let mut d = sol.dual_rows().to_vec();
        d.resize(mb.n_constraints(), 0.0);
        Some(d)
    };
    let mip_gap = if mb.is_mip() { solved.mip_gap() } else { 0.0 };
    Ok(SolveOutcome {
        status,
        objective: mb.evaluate(&values),
        values,
        duals,
        mip_gap,
    })
}

/// Solves and insists on an optimal outcome.
pub fn solve_optimal(mb: &ModelBuilder, opts: &SolveOptions) -> Result<SolveOutcome> {
    let out = solve(mb, opts)?;
    if out.status == SolveStatus::Limit {
        if let Some(limit_s) = opts.time_limit_s {
            return Err(Error::TimeLimit { limit_s });
        }
    }
    if !out.is_optimal() {
        return Err(Error::Backend(format!(
            "model {} ended with status {:?}",
            mb.name, out.status
        )));
    }
    Ok(out)
}
