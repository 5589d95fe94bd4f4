//! DC dispatch with load shedding for a fixed topology and realization.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::{self, Cmp, Con, ModelBuilder, Sense, SolveOptions, SolveStatus, Var};
use crate::netmodel::{BusId, DemandId, GenId, LineId, Network};
use crate::uncertainty::{enumerate_choices, realize, RealizationChoice, Realization, UncertaintySetPeriod};

/// Line statuses for one period, indexed like [`Network::lines`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Topology {
    x: Vec<bool>,
}

impl Topology {
    /// Existing lines only.
    pub fn existing(net: &Network) -> Self {
        Self {
            x: net.lines().iter().map(|l| !l.is_candidate()).collect(),
        }
    }

    /// Existing lines plus the listed candidates.
    pub fn with_built(net: &Network, built: &[LineId]) -> Result<Self> {
        let mut t = Self::existing(net);
        for id in built {
            let i = net
                .line_index(*id)
                .ok_or_else(|| Error::Contract(format!("unknown line {id}")))?;
            t.x[i] = true;
        }
        Ok(t)
    }

    /// Every line, candidates included.
    pub fn all(net: &Network) -> Self {
        Self {
            x: vec![true; net.lines().len()],
        }
    }

    pub fn from_flags(net: &Network, x: Vec<bool>) -> Result<Self> {
        let t = Self { x };
        t.check(net)?;
        Ok(t)
    }

    pub fn check(&self, net: &Network) -> Result<()> {
        if self.x.len() != net.lines().len() {
            return Err(Error::Contract(format!(
                "topology covers {} lines, network has {}",
                self.x.len(),
                net.lines().len()
            )));
        }
        if let Some(l) = net
            .lines()
            .iter()
            .zip(&self.x)
            .find(|(l, on)| !l.is_candidate() && !**on)
        {
            return Err(Error::Contract(format!("existing line {} switched off", l.0.id)));
        }
        Ok(())
    }

    pub fn is_on(&self, line_index: usize) -> bool {
        self.x[line_index]
    }

    pub fn flags(&self) -> &[bool] {
        &self.x
    }

    pub fn set(&mut self, line_index: usize, on: bool) {
        self.x[line_index] = on;
    }

    pub fn built_candidates(&self, net: &Network) -> Vec<LineId> {
        net.lines()
            .iter()
            .zip(&self.x)
            .filter(|(l, on)| l.is_candidate() && **on)
            .map(|(l, _)| l.id)
            .collect()
    }
}

/// Dual values of the dispatch rows, in the same units as the cost.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DispatchDuals {
    pub lambda: BTreeMap<BusId, f64>,
    pub phi: BTreeMap<LineId, f64>,
    pub chi: f64,
    pub phi_hat: BTreeMap<LineId, f64>,
    pub phi_check: BTreeMap<LineId, f64>,
    pub xi_hat: BTreeMap<BusId, f64>,
    pub xi_check: BTreeMap<BusId, f64>,
    pub alpha: BTreeMap<DemandId, f64>,
    pub phi_g: BTreeMap<GenId, f64>,
    pub phi_d: BTreeMap<DemandId, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    pub cost_eur: f64,
    pub g_mw: BTreeMap<GenId, f64>,
    pub p_mw: BTreeMap<DemandId, f64>,
    pub r_mw: BTreeMap<DemandId, f64>,
    pub f_mw: BTreeMap<LineId, f64>,
    pub theta_rad: BTreeMap<BusId, f64>,
    pub duals: Option<DispatchDuals>,
}

/// How a line enters a recourse block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum LineState {
    Off,
    On,
    /// Status given by a continuous `x` in the enclosing model.
    Var(Var),
}

/// Handles to the variables and rows of one dispatch block.
#[derive(Debug, Clone, Default)]
pub(crate) struct RecourseBlock {
    pub g: Vec<(GenId, Var)>,
    pub p: Vec<(DemandId, Var)>,
    pub r: Vec<(DemandId, Var)>,
    pub f: Vec<(usize, Var)>,
    pub theta: Vec<Var>,
    /// Cost terms at unit σ.
    pub cost: Vec<(Var, f64)>,
    pub balance: Vec<Con>,
    pub flow: Vec<(usize, Con)>,
    pub slack_row: Option<Con>,
    pub f_hi: Vec<(usize, Con)>,
    pub f_lo: Vec<(usize, Con)>,
    pub th_hi: Vec<(usize, Con)>,
    pub th_lo: Vec<(usize, Con)>,
    pub demand_rows: Vec<(DemandId, Con)>,
    pub gen_rows: Vec<(GenId, Con)>,
    pub shed_rows: Vec<(DemandId, Con)>,
}

/// Appends one dispatch block to `mb`.
///
/// With `bound_rows` every limit is an explicit row so that it carries a dual;
/// otherwise limits are variable bounds and the slack angle is fixed by its
/// bounds. Only generators and demands present in `real` take part.
pub(crate) fn add_recourse_block(
    mb: &mut ModelBuilder,
    net: &Network,
    real: &Realization,
    t: usize,
    tag: &str,
    state: impl Fn(usize) -> LineState,
    bound_rows: bool,
) -> Result<RecourseBlock> {
    let inf = f64::INFINITY;
    let pi = net.horizon().angle_bound_rad;
    let slack = net.slack_index();
    let mut blk = RecourseBlock::default();
    let mut at_bus: Vec<Vec<(Var, f64)>> = vec![Vec::new(); net.n_buses()];
    let mut angle_gap: Option<Vec<f64>> = None;

    for g in net.generators() {
        let Some(&cap) = real.gen_capacity_mw.get(&g.id) else {
            continue;
        };
        let ub = if bound_rows { inf } else { cap };
        let v = mb.continuous(format!("g{tag}_{}", g.id), 0.0, ub);
        if bound_rows {
            blk.gen_rows
                .push((g.id, mb.constraint(format!("gmax{tag}_{}", g.id), [(v, 1.0)], Cmp::Le, cap)));
        }
        at_bus[net.bus_index(g.bus)].push((v, 1.0));
        blk.cost.push((v, g.cost_eur_per_mwh));
        blk.g.push((g.id, v));
    }
    for d in net.demands() {
        let Some(&dem) = real.demand_mw.get(&d.id) else {
            continue;
        };
        let e = net.shed_fraction(d.id, t)?;
        let b = net.bus_index(d.bus);
        let (p, r);
        if bound_rows {
            p = mb.continuous(format!("p{tag}_{}", d.id), 0.0, inf);
            r = mb.continuous(format!("r{tag}_{}", d.id), 0.0, inf);
            blk.demand_rows
                .push((d.id, mb.constraint(format!("pdem{tag}_{}", d.id), [(p, 1.0)], Cmp::Eq, dem)));
            blk.shed_rows
                .push((d.id, mb.constraint(format!("rmax{tag}_{}", d.id), [(r, 1.0)], Cmp::Le, e * dem)));
        } else {
            p = mb.continuous(format!("p{tag}_{}", d.id), dem, dem);
            r = mb.continuous(format!("r{tag}_{}", d.id), 0.0, e * dem);
        }
        at_bus[b].push((r, 1.0));
        at_bus[b].push((p, -1.0));
        blk.cost.push((r, d.shed_cost_eur_per_mwh));
        blk.p.push((d.id, p));
        blk.r.push((d.id, r));
    }

    for (n, bus) in net.buses().iter().enumerate() {
        let v = if bound_rows || n != slack {
            let (lo, hi) = if bound_rows { (-inf, inf) } else { (-pi, pi) };
            mb.continuous(format!("th{tag}_{}", bus.id), lo, hi)
        } else {
            mb.continuous(format!("th{tag}_{}", bus.id), 0.0, 0.0)
        };
        blk.theta.push(v);
        if bound_rows {
            if n == slack {
                blk.slack_row = Some(mb.constraint(format!("slack{tag}"), [(v, 1.0)], Cmp::Eq, 0.0));
            } else {
                blk.th_hi
                    .push((n, mb.constraint(format!("thmax{tag}_{}", bus.id), [(v, 1.0)], Cmp::Le, pi)));
                blk.th_lo
                    .push((n, mb.constraint(format!("thmin{tag}_{}", bus.id), [(v, 1.0)], Cmp::Ge, -pi)));
            }
        }
    }

    for (k, line) in net.lines().iter().enumerate() {
        let st = state(k);
        if st == LineState::Off {
            continue;
        }
        let fmax = line.capacity_mw;
        let (lo, hi) = if bound_rows || matches!(st, LineState::Var(_)) {
            (-inf, inf)
        } else {
            (-fmax, fmax)
        };
        let f = mb.continuous(format!("f{tag}_{}", line.id), lo, hi);
        let o = net.bus_index(line.from_bus);
        let r = net.bus_index(line.to_bus);
        let b = line.susceptance_s;
        at_bus[o].push((f, -1.0));
        at_bus[r].push((f, 1.0));
        let (tho, thr) = (blk.theta[o], blk.theta[r]);
        match st {
            LineState::On => {
                let c = mb.constraint(
                    format!("flow{tag}_{}", line.id),
                    [(f, 1.0), (tho, -b), (thr, b)],
                    Cmp::Eq,
                    0.0,
                );
                blk.flow.push((k, c));
                if bound_rows {
                    blk.f_hi
                        .push((k, mb.constraint(format!("fmax{tag}_{}", line.id), [(f, 1.0)], Cmp::Le, fmax)));
                    blk.f_lo
                        .push((k, mb.constraint(format!("fmin{tag}_{}", line.id), [(f, 1.0)], Cmp::Ge, -fmax)));
                }
            }
            LineState::Var(x) => {
                let m = b * angle_gap.get_or_insert_with(|| max_angle_gaps(net, &state))[k];
                mb.constraint(
                    format!("flowU{tag}_{}", line.id),
                    [(f, 1.0), (tho, -b), (thr, b), (x, m)],
                    Cmp::Le,
                    m,
                );
                mb.constraint(
                    format!("flowL{tag}_{}", line.id),
                    [(f, 1.0), (tho, -b), (thr, b), (x, -m)],
                    Cmp::Ge,
                    -m,
                );
                mb.constraint(format!("fmaxx{tag}_{}", line.id), [(f, 1.0), (x, -fmax)], Cmp::Le, 0.0);
                mb.constraint(format!("fminx{tag}_{}", line.id), [(f, 1.0), (x, fmax)], Cmp::Ge, 0.0);
            }
            LineState::Off => unreachable!(),
        }
        blk.f.push((k, f));
    }

    for (n, terms) in at_bus.into_iter().enumerate() {
        let c = mb.constraint(
            format!("bal{tag}_{}", net.buses()[n].id),
            terms,
            Cmp::Eq,
            0.0,
        );
        blk.balance.push(c);
    }
    Ok(blk)
}

/// Upper bound on |θo − θr| for every switchable line: the angle box, or the
/// shortest path through always-on lines weighted by fmax/b, whichever is
/// smaller. Entries for other lines are unused.
fn max_angle_gaps(net: &Network, state: &impl Fn(usize) -> LineState) -> Vec<f64> {
    let pi = net.horizon().angle_bound_rad;
    let nb = net.n_buses();
    let slack = net.slack_index();
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nb];
    for (k, l) in net.lines().iter().enumerate() {
        if state(k) == LineState::On && l.susceptance_s > 0.0 {
            let (o, r, w) = (net.bus_index(l.from_bus), net.bus_index(l.to_bus), l.capacity_mw / l.susceptance_s);
            adj[o].push((r, w));
            adj[r].push((o, w));
        }
    }
    let mut from: Vec<Option<Vec<f64>>> = vec![None; nb];
    let mut out = vec![0.0; net.lines().len()];
    for (k, l) in net.lines().iter().enumerate() {
        if !matches!(state(k), LineState::Var(_)) {
            continue;
        }
        let (o, r) = (net.bus_index(l.from_bus), net.bus_index(l.to_bus));
        let boxed = if o == slack || r == slack { pi } else { 2.0 * pi };
        let dist = from[o].get_or_insert_with(|| shortest_paths(&adj, o))[r];
        out[k] = boxed.min(dist);
    }
    out
}

/// Dense Dijkstra; networks here have at most a few hundred buses.
fn shortest_paths(adj: &[Vec<(usize, f64)>], src: usize) -> Vec<f64> {
    let n = adj.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[src] = 0.0;
    for _ in 0..n {
        let Some(u) = (0..n).filter(|&i| !done[i] && dist[i].is_finite()).min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
        else {
            break;
        };
        done[u] = true;
        for &(v, w) in &adj[u] {
            if dist[u] + w < dist[v] {
                dist[v] = dist[u] + w;
            }
        }
    }
    dist
}

fn check_realization(net: &Network, real: &Realization) -> Result<()> {
    if let Some(id) = real.gen_capacity_mw.keys().find(|id| net.generator(**id).is_none()) {
        return Err(Error::Contract(format!("realization names unknown generator {id}")));
    }
    if let Some(id) = real.demand_mw.keys().find(|id| net.demand(**id).is_none()) {
        return Err(Error::Contract(format!("realization names unknown demand {id}")));
    }
    if let Some((id, v)) = real.gen_capacity_mw.iter().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::Contract(format!("generator {id} capacity {v} is negative")));
    }
    if let Some((id, v)) = real.demand_mw.iter().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::Contract(format!("demand {id} value {v} is negative")));
    }
    Ok(())
}

/// Buses holding load that cannot be shed in islands without enough capacity.
fn stranded_buses(net: &Network, topo: &Topology, real: &Realization, t: usize) -> Vec<u32> {
    let n = net.n_buses();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut i = i;
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for (k, l) in net.lines().iter().enumerate() {
        if topo.is_on(k) {
            let (a, b) = (find(&mut parent, net.bus_index(l.from_bus)), find(&mut parent, net.bus_index(l.to_bus)));
            parent[a] = b;
        }
    }
    let mut supply = vec![0.0; n];
    let mut firm = vec![0.0; n];
    for g in net.generators() {
        let root = find(&mut parent, net.bus_index(g.bus));
        supply[root] += real.gen_capacity_mw.get(&g.id).copied().unwrap_or(0.0);
    }
    for d in net.demands() {
        let root = find(&mut parent, net.bus_index(d.bus));
        let e = net.shed_fraction(d.id, t).unwrap_or(1.0);
        firm[root] += (1.0 - e) * real.demand_mw.get(&d.id).copied().unwrap_or(0.0);
    }
    let mut buses: BTreeSet<u32> = BTreeSet::new();
    for d in net.demands() {
        let root = find(&mut parent, net.bus_index(d.bus));
        let e = net.shed_fraction(d.id, t).unwrap_or(1.0);
        if firm[root] > supply[root] + 1e-9 && e < 1.0 {
            buses.insert(d.bus.0);
        }
    }
    if buses.is_empty() {
        // Flow limits rather than islanding: name every bus with firm load.
        for d in net.demands() {
            if net.shed_fraction(d.id, t).unwrap_or(1.0) < 1.0 {
                buses.insert(d.bus.0);
            }
        }
    }
    buses.into_iter().collect()
}

pub fn solve_dispatch(
    net: &Network,
    topo: &Topology,
    real: &Realization,
    t: usize,
    opts: &SolveOptions,
) -> Result<DispatchResult> {
    topo.check(net)?;
    net.discount_factor(t)?;
    check_realization(net, real)?;
    let sigma = net.horizon().sigma_hours;

    let mut mb = ModelBuilder::new(format!("dispatch_t{t}"), Sense::Minimize);
    let blk = add_recourse_block(
        &mut mb,
        net,
        real,
        t,
        "",
        |k| if topo.is_on(k) { LineState::On } else { LineState::Off },
        true,
    )?;
    for &(v, c) in &blk.cost {
        mb.add_obj(v, c);
    }
    let out = milp::solve(&mb, opts)?;
    match out.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::DispatchInfeasible {
                period: t,
                buses: stranded_buses(net, topo, real, t),
            })
        }
        s => return Err(Error::Backend(format!("dispatch LP in period {t} ended with {s:?}"))),
    }

    let lines = net.lines();
    let buses = net.buses();
    let val = |v: Var| out.value(v);
    let du = |c: Con| sigma * out.dual(c).unwrap_or(0.0);
    let mut f_mw: BTreeMap<LineId, f64> = lines.iter().map(|l| (l.id, 0.0)).collect();
    for &(k, v) in &blk.f {
        f_mw.insert(lines[k].id, val(v));
    }
    let duals = DispatchDuals {
        lambda: blk.balance.iter().enumerate().map(|(n, &c)| (buses[n].id, du(c))).collect(),
        phi: blk.flow.iter().map(|&(k, c)| (lines[k].id, du(c))).collect(),
        chi: blk.slack_row.map(du).unwrap_or(0.0),
        phi_hat: blk.f_hi.iter().map(|&(k, c)| (lines[k].id, du(c))).collect(),
        phi_check: blk.f_lo.iter().map(|&(k, c)| (lines[k].id, du(c))).collect(),
        xi_hat: blk.th_hi.iter().map(|&(n, c)| (buses[n].id, du(c))).collect(),
        xi_check: blk.th_lo.iter().map(|&(n, c)| (buses[n].id, du(c))).collect(),
        alpha: blk.demand_rows.iter().map(|&(id, c)| (id, du(c))).collect(),
        phi_g: blk.gen_rows.iter().map(|&(id, c)| (id, du(c))).collect(),
        phi_d: blk.shed_rows.iter().map(|&(id, c)| (id, du(c))).collect(),
    };
    Ok(DispatchResult {
        cost_eur: sigma * out.objective.max(0.0),
        g_mw: blk.g.iter().map(|&(id, v)| (id, val(v))).collect(),
        p_mw: blk.p.iter().map(|&(id, v)| (id, val(v))).collect(),
        r_mw: blk.r.iter().map(|&(id, v)| (id, val(v))).collect(),
        f_mw,
        theta_rad: blk.theta.iter().enumerate().map(|(n, &v)| (buses[n].id, val(v))).collect(),
        duals: Some(duals),
    })
}

/// Exhaustive worst case over every choice in the budgeted set.
/// Ties go to the first choice in enumeration order.
pub fn worst_case_bruteforce(
    net: &Network,
    topo: &Topology,
    uset: &UncertaintySetPeriod,
    t: usize,
    opts: &SolveOptions,
) -> Result<(f64, RealizationChoice)> {
    let mut best: Option<(f64, RealizationChoice)> = None;
    for choice in enumerate_choices(uset)? {
        let real = realize(uset, &choice)?;
        let cost = solve_dispatch(net, topo, &real, t, opts)?.cost_eur;
        let better = match &best {
            None => true,
            Some((b, _)) => cost > *b + 1e-9 * b.abs().max(1.0),
        };
        if better {
            best = Some((cost, choice));
        }
    }
    Ok(best.expect("enumeration always yields the empty choice"))
}
