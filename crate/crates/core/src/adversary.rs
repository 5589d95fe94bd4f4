//! Worst-case realization for one period as a single MILP.
//!
//! The dispatch LP is replaced by its dual, the realization is written in terms
//! of binaries `z`, and each product of a binary with a dual variable is
//! linearized exactly with big-M bounds. The model is built at unit σ and the
//! result scaled afterwards.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dispatch::{solve_dispatch, Topology};
use crate::error::{Error, Result};
use crate::milp::{self, Cmp, ModelBuilder, Sense, SolveOptions, SolveStatus, Var};
use crate::netmodel::{DemandId, GenId, Network};
use crate::uncertainty::{realize, Realization, RealizationChoice, UncertaintySetPeriod};

pub const MAX_BIG_M_RETRIES: usize = 3;
pub const CERTIFICATE_TOL: f64 = 1e-5;

/// Bounds placed on the dual variables, at unit σ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BigMLedger {
    pub lambda: f64,
    pub flow: f64,
    pub angle: f64,
    pub alpha: BTreeMap<DemandId, f64>,
    pub phi_g: BTreeMap<GenId, f64>,
    pub phi_d: BTreeMap<DemandId, f64>,
}

impl BigMLedger {
    pub fn new(net: &Network, topo: &Topology) -> Self {
        let cu_max = net.max_shed_cost().max(1.0);
        let active: Vec<f64> = net
            .lines()
            .iter()
            .enumerate()
            .filter(|(k, _)| topo.is_on(*k))
            .map(|(_, l)| l.capacity_mw)
            .collect();
        let ratio = if active.is_empty() {
            1.0
        } else {
            active.iter().sum::<f64>() / active.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        let flow = (cu_max * ratio).max(1.0);
        let b_sum: f64 = net
            .lines()
            .iter()
            .enumerate()
            .filter(|(k, _)| topo.is_on(*k))
            .map(|(_, l)| l.susceptance_s)
            .sum();
        Self {
            lambda: cu_max,
            flow,
            angle: (flow * b_sum).max(1.0),
            alpha: net
                .demands()
                .iter()
                .map(|d| (d.id, d.shed_cost_eur_per_mwh.max(1.0)))
                .collect(),
            phi_g: net
                .generators()
                .iter()
                .map(|g| (g.id, cu_max + g.cost_eur_per_mwh))
                .collect(),
            phi_d: net
                .demands()
                .iter()
                .map(|d| (d.id, cu_max + d.shed_cost_eur_per_mwh))
                .collect(),
        }
    }

    pub fn scaled(&self, f: f64) -> Self {
        fn s<K: Copy + Ord>(m: &BTreeMap<K, f64>, f: f64) -> BTreeMap<K, f64> {
            m.iter().map(|(k, v)| (*k, v * f)).collect()
        }
        Self {
            lambda: self.lambda * f,
            flow: self.flow * f,
            angle: self.angle * f,
            alpha: s(&self.alpha, f),
            phi_g: s(&self.phi_g, f),
            phi_d: s(&self.phi_d, f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryResult {
    pub period: usize,
    pub worst_cost_eur: f64,
    pub choice: RealizationChoice,
    pub realization: Realization,
    /// Dispatch cost re-solved at `realization`.
    pub certificate_eur: f64,
    pub big_m_retries: usize,
    pub big_m: BigMLedger,
}

impl AdversaryResult {
    pub fn certificate_residual(&self) -> f64 {
        rel_diff(self.worst_cost_eur, self.certificate_eur)
    }
}

pub(crate) fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

struct Built {
    mb: ModelBuilder,
    z_g: Vec<(GenId, Var)>,
    z_d: Vec<(DemandId, Var)>,
    /// Dual variables with an artificial bound: (var, bound magnitude).
    bounded: Vec<(Var, f64)>,
}

fn build(
    net: &Network,
    topo: &Topology,
    uset: &UncertaintySetPeriod,
    t: usize,
    m: &BigMLedger,
) -> Result<Built> {
    let pi = net.horizon().angle_bound_rad;
    let slack = net.slack_index();
    let mut mb = ModelBuilder::new(format!("adversary_t{t}"), Sense::Maximize);
    let mut bounded = Vec::new();
    let mut var = |mb: &mut ModelBuilder, name: String, lo: f64, hi: f64| {
        let v = mb.continuous(name, lo, hi);
        bounded.push((v, lo.abs().max(hi.abs())));
        v
    };

    let lambda: Vec<Var> = net
        .buses()
        .iter()
        .map(|b| var(&mut mb, format!("lam_{}", b.id), -m.lambda, m.lambda))
        .collect();

    // Per-bus accumulation of the angle-column rows.
    let mut angle_rows: Vec<Vec<(Var, f64)>> = vec![Vec::new(); net.n_buses()];
    for (k, l) in net.lines().iter().enumerate() {
        if !topo.is_on(k) {
            continue;
        }
        let phi = var(&mut mb, format!("phi_{}", l.id), -m.flow, m.flow);
        let hat = var(&mut mb, format!("phihat_{}", l.id), -m.flow, 0.0);
        let chk = var(&mut mb, format!("phichk_{}", l.id), 0.0, m.flow);
        mb.add_obj(hat, l.capacity_mw);
        mb.add_obj(chk, -l.capacity_mw);
        let (o, r) = (net.bus_index(l.from_bus), net.bus_index(l.to_bus));
        mb.constraint(
            format!("dflow_{}", l.id),
            [(lambda[o], -1.0), (lambda[r], 1.0), (phi, 1.0), (hat, 1.0), (chk, 1.0)],
            Cmp::Eq,
            0.0,
        );
        angle_rows[o].push((phi, -l.susceptance_s));
        angle_rows[r].push((phi, l.susceptance_s));
    }
    for (n, bus) in net.buses().iter().enumerate() {
        // The slack row holds a free multiplier and never binds.
        if n == slack {
            continue;
        }
        let hat = var(&mut mb, format!("xihat_{}", bus.id), -m.angle, 0.0);
        let chk = var(&mut mb, format!("xichk_{}", bus.id), 0.0, m.angle);
        mb.add_obj(hat, pi);
        mb.add_obj(chk, -pi);
        let mut row = std::mem::take(&mut angle_rows[n]);
        row.push((hat, 1.0));
        row.push((chk, 1.0));
        mb.constraint(format!("dangle_{}", bus.id), row, Cmp::Eq, 0.0);
    }

    let mut z_g = Vec::new();
    for g in net.generators() {
        let Some(&nom) = uset.gen_nominal_mw.get(&g.id) else {
            continue;
        };
        let dev = uset.gen_deviation_mw[&g.id];
        let mg = m.phi_g[&g.id];
        let pg = var(&mut mb, format!("phig_{}", g.id), -mg, 0.0);
        let lam = lambda[net.bus_index(g.bus)];
        mb.constraint(format!("dgen_{}", g.id), [(lam, 1.0), (pg, 1.0)], Cmp::Le, g.cost_eur_per_mwh);
        mb.add_obj(pg, nom);
        if dev > 0.0 && uset.gamma_g > 0 {
            let z = mb.binary(format!("zg_{}", g.id));
            let w = mb.continuous(format!("wg_{}", g.id), -mg, 0.0);
            mccormick(&mut mb, &format!("g_{}", g.id), w, z, pg, mg);
            mb.add_obj(w, -dev);
            z_g.push((g.id, z));
        }
    }

    let mut z_d = Vec::new();
    for d in net.demands() {
        let Some(&nom) = uset.dem_nominal_mw.get(&d.id) else {
            continue;
        };
        let dev = uset.dem_deviation_mw[&d.id];
        let e = net.shed_fraction(d.id, t)?;
        let lam = lambda[net.bus_index(d.bus)];
        let ma = m.alpha[&d.id];
        let md = m.phi_d[&d.id];
        let alpha = var(&mut mb, format!("alpha_{}", d.id), -ma, ma);
        let pd = var(&mut mb, format!("phid_{}", d.id), -md, 0.0);
        mb.constraint(format!("ddem_{}", d.id), [(lam, -1.0), (alpha, 1.0)], Cmp::Le, 0.0);
        mb.constraint(
            format!("dshed_{}", d.id),
            [(lam, 1.0), (pd, 1.0)],
            Cmp::Le,
            d.shed_cost_eur_per_mwh,
        );
        mb.add_obj(alpha, nom);
        mb.add_obj(pd, e * nom);
        if dev > 0.0 && uset.gamma_d > 0 {
            let z = mb.binary(format!("zd_{}", d.id));
            let wa = mb.continuous(format!("wa_{}", d.id), -ma, ma);
            mccormick(&mut mb, &format!("a_{}", d.id), wa, z, alpha, ma);
            mb.add_obj(wa, dev);
            if e > 0.0 {
                let wd = mb.continuous(format!("wd_{}", d.id), -md, 0.0);
                mccormick(&mut mb, &format!("d_{}", d.id), wd, z, pd, md);
                mb.add_obj(wd, e * dev);
            }
            z_d.push((d.id, z));
        }
    }

    if !z_g.is_empty() {
        mb.constraint(
            "budget_g",
            z_g.iter().map(|&(_, z)| (z, 1.0)),
            Cmp::Le,
            uset.gamma_g as f64,
        );
    }
    if !z_d.is_empty() {
        mb.constraint(
            "budget_d",
            z_d.iter().map(|&(_, z)| (z, 1.0)),
            Cmp::Le,
            uset.gamma_d as f64,
        );
    }
    Ok(Built {
        mb,
        z_g,
        z_d,
        bounded,
    })
}

/// `w = z * v` for binary `z` and `|v| <= m`.
fn mccormick(mb: &mut ModelBuilder, tag: &str, w: Var, z: Var, v: Var, m: f64) {
    mb.constraint(format!("mc1_{tag}"), [(w, 1.0), (z, -m)], Cmp::Le, 0.0);
    mb.constraint(format!("mc2_{tag}"), [(w, 1.0), (z, m)], Cmp::Ge, 0.0);
    mb.constraint(format!("mc3_{tag}"), [(w, 1.0), (v, -1.0), (z, -m)], Cmp::Ge, -m);
    mb.constraint(format!("mc4_{tag}"), [(w, 1.0), (v, -1.0), (z, m)], Cmp::Le, m);
}

fn at_bound(vals: &[f64], bounded: &[(Var, f64)]) -> Option<(Var, f64)> {
    bounded
        .iter()
        .find(|(v, m)| vals[v.index()].abs() >= m * (1.0 - 1e-7))
        .copied()
}

pub fn solve_worst_case(
    net: &Network,
    topo: &Topology,
    uset: &UncertaintySetPeriod,
    t: usize,
    opts: &SolveOptions,
) -> Result<AdversaryResult> {
    topo.check(net)?;
    net.discount_factor(t)?;
    uset.validate()?;
    let sigma = net.horizon().sigma_hours;

    let mut ledger = BigMLedger::new(net, topo);
    let mut prev: Option<f64> = None;
    let mut retries = 0;
    let (built, out) = loop {
        let built = build(net, topo, uset, t, &ledger)?;
        let out = milp::solve(&built.mb, opts)?;
        match out.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible | SolveStatus::Unbounded => {
                return Err(Error::DispatchInfeasible {
                    period: t,
                    buses: firm_load_buses(net, t),
                })
            }
            SolveStatus::Limit if opts.time_limit_s.is_some() => {
                return Err(Error::TimeLimit {
                    limit_s: opts.time_limit_s.unwrap_or_default(),
                })
            }
            s => {
                return Err(Error::Backend(format!(
                    "adversary MILP in period {t} ended with {s:?}"
                )))
            }
        }
        let hit = at_bound(&out.values, &built.bounded);
        let stable = prev.is_some_and(|p| rel_diff(p, out.objective) <= 1e-9);
        match hit {
            None => break (built, out),
            Some(_) if stable => break (built, out),
            Some((v, bound)) => {
                if retries == MAX_BIG_M_RETRIES {
                    return Err(Error::BigMTooSmall {
                        period: t,
                        detail: format!(
                            "{} at its bound {bound:e} after {retries} doublings",
                            built.mb.var_name(v)
                        ),
                    });
                }
                log::debug!("period {t}: dual bound {bound:e} binding, doubling big-M");
                prev = Some(out.objective);
                ledger = ledger.scaled(2.0);
                retries += 1;
            }
        }
    };

    let choice = RealizationChoice {
        z_g: built
            .z_g
            .iter()
            .filter(|(_, z)| out.value(*z) > 0.5)
            .map(|(id, _)| *id)
            .collect(),
        z_d: built
            .z_d
            .iter()
            .filter(|(_, z)| out.value(*z) > 0.5)
            .map(|(id, _)| *id)
            .collect(),
    };
    let realization = realize(uset, &choice)?;
    let worst = sigma * out.objective.max(0.0);
    let certificate = solve_dispatch(net, topo, &realization, t, opts)?.cost_eur;
    if rel_diff(worst, certificate) > CERTIFICATE_TOL {
        return Err(Error::Certificate {
            period: t,
            adversary_eur: worst,
            dispatch_eur: certificate,
        });
    }
    Ok(AdversaryResult {
        period: t,
        worst_cost_eur: worst,
        choice,
        realization,
        certificate_eur: certificate,
        big_m_retries: retries,
        big_m: ledger,
    })
}

fn firm_load_buses(net: &Network, t: usize) -> Vec<u32> {
    let mut b: Vec<u32> = net
        .demands()
        .iter()
        .filter(|d| net.shed_fraction(d.id, t).unwrap_or(1.0) < 1.0)
        .map(|d| d.bus.0)
        .collect();
    b.sort_unstable();
    b.dedup();
    b
}
