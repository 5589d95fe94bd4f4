//! Master problem of the column-and-constraint generation loop.
//!
//! Investment binaries are chosen against every realization collected so far;
//! each cut adds one full dispatch block per period. Money is handled in
//! million euros inside the model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dispatch::{add_recourse_block, LineState, Topology};
use crate::error::{Error, Result};
use crate::milp::{self, Cmp, ModelBuilder, Sense, SolveOptions, Var};
use crate::netmodel::{BusId, LineId, Network};
use crate::uncertainty::Realization;

pub const MEUR: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub iteration: usize,
    /// One realization per period of the layout.
    pub realizations: Vec<Realization>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutSet {
    periods: usize,
    cuts: Vec<Cut>,
}

impl CutSet {
    pub fn new(periods: usize) -> Self {
        Self {
            periods,
            cuts: Vec::new(),
        }
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    /// True when an identical set of realizations is already stored.
    pub fn contains(&self, realizations: &[Realization]) -> bool {
        self.cuts.iter().any(|c| {
            c.realizations.len() == realizations.len()
                && c.realizations
                    .iter()
                    .zip(realizations)
                    .all(|(a, b)| a.approx_eq(b, 1e-9))
        })
    }

    pub fn append(&mut self, iteration: usize, realizations: Vec<Realization>) -> Result<()> {
        if realizations.len() != self.periods {
            return Err(Error::Contract(format!(
                "cut has {} realizations, master expects {}",
                realizations.len(),
                self.periods
            )));
        }
        self.cuts.push(Cut {
            iteration,
            realizations,
        });
        Ok(())
    }
}

/// Functional form of [`CutSet::append`].
pub fn append_cut(mut cuts: CutSet, iteration: usize, realizations: Vec<Realization>) -> Result<CutSet> {
    cuts.append(iteration, realizations)?;
    Ok(cuts)
}

/// Shape of the investment decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MasterLayout {
    /// Builds may happen in any period; one cost bound per period.
    Dynamic,
    /// One build decision, evaluated against a single period.
    SingleEpoch {
        /// Period reported for every build.
        build_period: usize,
        /// Period whose shed fractions apply to the dispatch blocks.
        eval_period: usize,
        /// Objective weight on undiscounted build cost.
        invest_weight: f64,
        /// Objective weight on the period cost bound.
        op_weight: f64,
        /// Discount applied to build cost in the budget row.
        budget_discount: f64,
        /// Budget still available, in euros.
        budget_left_eur: f64,
    },
}

impl MasterLayout {
    pub fn periods(&self, net: &Network) -> usize {
        match self {
            MasterLayout::Dynamic => net.horizon().n_periods,
            MasterLayout::SingleEpoch { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelStats {
    pub continuous: usize,
    pub discrete: usize,
    pub constraints: usize,
}

impl ModelStats {
    pub fn of(mb: &ModelBuilder) -> Self {
        Self {
            continuous: mb.n_continuous(),
            discrete: mb.n_binary(),
            constraints: mb.n_constraints(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuiltLine {
    pub line: LineId,
    pub corridor: String,
    pub period: usize,
    pub cost_eur: f64,
    pub npv_eur: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionPlan {
    pub n_periods: usize,
    /// Built candidates ordered by period, then line id.
    pub builds: Vec<BuiltLine>,
    pub invest_cost_npv_eur: f64,
}

impl ExpansionPlan {
    pub fn empty(n_periods: usize) -> Self {
        Self {
            n_periods,
            builds: Vec::new(),
            invest_cost_npv_eur: 0.0,
        }
    }

    pub fn from_builds(net: &Network, builds: &BTreeMap<LineId, usize>) -> Result<Self> {
        let n = net.horizon().n_periods;
        let mut out = Vec::new();
        for (&id, &t) in builds {
            let line = net
                .line(id)
                .ok_or_else(|| Error::Contract(format!("unknown line {id}")))?;
            if !line.is_candidate() {
                return Err(Error::Contract(format!("line {id} is not a candidate")));
            }
            let disc = net.discount_factor(t)?;
            out.push(BuiltLine {
                line: id,
                corridor: line.corridor(),
                period: t,
                cost_eur: line.build_cost_eur,
                npv_eur: disc * line.build_cost_eur,
            });
        }
        out.sort_by_key(|b| (b.period, b.line));
        let invest = out.iter().map(|b| b.npv_eur).sum();
        Ok(Self {
            n_periods: n,
            builds: out,
            invest_cost_npv_eur: invest,
        })
    }

    pub fn build_period(&self, id: LineId) -> Option<usize> {
        self.builds.iter().find(|b| b.line == id).map(|b| b.period)
    }

    pub fn build_map(&self) -> BTreeMap<LineId, usize> {
        self.builds.iter().map(|b| (b.line, b.period)).collect()
    }

    /// Line statuses in period `t`.
    pub fn topology(&self, net: &Network, t: usize) -> Result<Topology> {
        let built: Vec<LineId> = self
            .builds
            .iter()
            .filter(|b| b.period <= t)
            .map(|b| b.line)
            .collect();
        Topology::with_built(net, &built)
    }

    /// Every line ever built, in id order.
    pub fn final_lines(&self) -> Vec<LineId> {
        let mut v: Vec<LineId> = self.builds.iter().map(|b| b.line).collect();
        v.sort();
        v
    }

    /// Discounted build cost per period.
    pub fn invest_by_period(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.n_periods];
        for b in &self.builds {
            v[b.period - 1] += b.npv_eur;
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterResult {
    pub plan: ExpansionPlan,
    /// Cost bound per layout period, euros.
    pub gamma: Vec<f64>,
    /// Master objective in euros (incumbent).
    pub objective_eur: f64,
    /// Proven lower bound on the master optimum; equals the objective at gap 0.
    pub bound_eur: f64,
    pub stats: ModelStats,
}

struct MasterModel {
    mb: ModelBuilder,
    /// Candidate index in `net.lines()` and its build binaries, one per layout period.
    y: Vec<(usize, Vec<Var>)>,
    gamma: Vec<Var>,
}

fn build(net: &Network, layout: &MasterLayout, cuts: &CutSet) -> Result<MasterModel> {
    let n = layout.periods(net);
    if cuts.periods != n {
        return Err(Error::Contract(format!(
            "cut set is for {} periods, layout has {n}",
            cuts.periods
        )));
    }
    let sigma = net.horizon().sigma_hours;
    let mut mb = ModelBuilder::new(format!("master_c{}", cuts.len()), Sense::Minimize);
    let cands: Vec<usize> = (0..net.lines().len())
        .filter(|&k| net.lines()[k].is_candidate())
        .collect();

    // Build binaries and line statuses.
    let mut y = Vec::with_capacity(cands.len());
    let mut x: BTreeMap<(usize, usize), Var> = BTreeMap::new();
    let mut budget_row = Vec::new();
    for &k in &cands {
        let line = &net.lines()[k];
        let c = line.build_cost_eur / MEUR;
        let ys: Vec<Var> = (1..=n)
            .map(|t| mb.binary(format!("y_{}_{t}", line.id)))
            .collect();
        match layout {
            MasterLayout::Dynamic => {
                for (i, &v) in ys.iter().enumerate() {
                    let disc = net.discount_factor(i + 1)?;
                    mb.add_obj(v, disc * c);
                    budget_row.push((v, disc * c));
                }
                for t in 1..=n {
                    let xv = mb.continuous(format!("x_{}_{t}", line.id), 0.0, 1.0);
                    let mut row = vec![(xv, 1.0)];
                    row.extend(ys[..t].iter().map(|&v| (v, -1.0)));
                    mb.constraint(format!("cum_{}_{t}", line.id), row, Cmp::Eq, 0.0);
                    x.insert((k, t), xv);
                }
                if n > 1 {
                    mb.constraint(
                        format!("once_{}", line.id),
                        ys.iter().map(|&v| (v, 1.0)),
                        Cmp::Le,
                        1.0,
                    );
                }
            }
            MasterLayout::SingleEpoch {
                invest_weight,
                budget_discount,
                ..
            } => {
                mb.add_obj(ys[0], invest_weight * c);
                budget_row.push((ys[0], budget_discount * c));
                x.insert((k, 1), ys[0]);
            }
        }
        y.push((k, ys));
    }
    // Identical parallel candidates are interchangeable: build them in id order.
    let mut twins: BTreeMap<(BusId, BusId, u64, u64, u64), Vec<usize>> = BTreeMap::new();
    for &k in &cands {
        let l = &net.lines()[k];
        let (a, b) = if l.from_bus <= l.to_bus { (l.from_bus, l.to_bus) } else { (l.to_bus, l.from_bus) };
        twins
            .entry((a, b, l.susceptance_s.to_bits(), l.capacity_mw.to_bits(), l.build_cost_eur.to_bits()))
            .or_default()
            .push(k);
    }
    for group in twins.values() {
        for w in group.windows(2) {
            for t in 1..=n {
                let (a, b) = (x[&(w[0], t)], x[&(w[1], t)]);
                mb.constraint(
                    format!("twin_{}_{}_{t}", net.lines()[w[0]].id, net.lines()[w[1]].id),
                    [(a, 1.0), (b, -1.0)],
                    Cmp::Ge,
                    0.0,
                );
            }
        }
    }

    let budget = match layout {
        MasterLayout::Dynamic => net.horizon().budget_eur,
        MasterLayout::SingleEpoch {
            budget_left_eur, ..
        } => *budget_left_eur,
    } / MEUR;
    if !budget_row.is_empty() {
        mb.constraint("budget", budget_row, Cmp::Le, budget.max(0.0));
    }

    let mut gamma = Vec::with_capacity(n);
    for t in 1..=n {
        let g = mb.continuous(format!("gamma_{t}"), 0.0, f64::INFINITY);
        let w = match layout {
            MasterLayout::Dynamic => net.discount_factor(t)?,
            MasterLayout::SingleEpoch { op_weight, .. } => *op_weight,
        };
        mb.add_obj(g, w);
        gamma.push(g);
    }

    for (l, cut) in cuts.cuts.iter().enumerate() {
        for t in 1..=n {
            let period = match layout {
                MasterLayout::Dynamic => t,
                MasterLayout::SingleEpoch { eval_period, .. } => *eval_period,
            };
            let blk = add_recourse_block(
                &mut mb,
                net,
                &cut.realizations[t - 1],
                period,
                &format!("_{t}_{l}"),
                |k| {
                    if !net.lines()[k].is_candidate() {
                        LineState::On
                    } else {
                        LineState::Var(x[&(k, t)])
                    }
                },
                false,
            )?;
            let mut row: Vec<(Var, f64)> = blk
                .cost
                .iter()
                .map(|&(v, c)| (v, -sigma * c / MEUR))
                .collect();
            row.push((gamma[t - 1], 1.0));
            mb.constraint(format!("cut_{t}_{l}"), row, Cmp::Ge, 0.0);
        }
    }
    Ok(MasterModel { mb, y, gamma })
}

/// Size of the master for a given number of cuts, without solving it.
pub fn master_stats(net: &Network, layout: &MasterLayout, n_cuts: usize, sample: &[Realization]) -> Result<ModelStats> {
    let mut cuts = CutSet::new(layout.periods(net));
    for i in 0..n_cuts {
        cuts.append(i + 1, sample.to_vec())?;
    }
    Ok(ModelStats::of(&build(net, layout, &cuts)?.mb))
}

pub fn solve_master(
    net: &Network,
    layout: &MasterLayout,
    cuts: &CutSet,
    opts: &SolveOptions,
) -> Result<MasterResult> {
    let m = build(net, layout, cuts)?;
    let out = milp::solve_optimal(&m.mb, opts)?;
    let mut builds = BTreeMap::new();
    for (k, ys) in &m.y {
        let on: Vec<usize> = ys
            .iter()
            .enumerate()
            .filter(|(_, v)| out.value(**v) > 0.5)
            .map(|(i, _)| i + 1)
            .collect();
        if on.len() > 1 {
            return Err(Error::Backend(format!(
                "line {} built more than once",
                net.lines()[*k].id
            )));
        }
        if let Some(&t) = on.first() {
            let t = match layout {
                MasterLayout::Dynamic => t,
                MasterLayout::SingleEpoch { build_period, .. } => *build_period,
            };
            builds.insert(net.lines()[*k].id, t);
        }
    }
    let plan = ExpansionPlan::from_builds(net, &builds)?;
    let gap = if out.mip_gap.is_finite() { out.mip_gap.max(0.0) } else { 0.0 };
    let budget_ok = match layout {
        MasterLayout::Dynamic => plan.invest_cost_npv_eur <= net.horizon().budget_eur * (1.0 + 1e-9) + 1e-6,
        MasterLayout::SingleEpoch { .. } => true,
    };
    if !budget_ok {
        return Err(Error::Backend("master plan exceeds the budget".into()));
    }
    Ok(MasterResult {
        plan,
        gamma: m.gamma.iter().map(|&g| out.value(g) * MEUR).collect(),
        objective_eur: out.objective * MEUR,
        bound_eur: (out.objective - gap * out.objective.abs()) * MEUR,
        stats: ModelStats::of(&m.mb),
    })
}
