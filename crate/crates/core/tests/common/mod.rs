//! Seeded random instances and enumeration oracles shared by integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tnep_core::dispatch::worst_case_bruteforce;
use tnep_core::milp::SolveOptions;
use tnep_core::netmodel::*;
use tnep_core::uncertainty::UncertaintySetPeriod;
use tnep_core::Topology;

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_buses: usize,
    pub max_gens: usize,
    pub max_demands: usize,
    pub max_gamma: u32,
    pub max_periods: usize,
    pub max_candidates: usize,
}

pub const SMALL: Shape = Shape {
    max_buses: 5,
    max_gens: 4,
    max_demands: 5,
    max_gamma: 2,
    max_periods: 1,
    max_candidates: 3,
};

pub const TINY_DYNAMIC: Shape = Shape {
    max_buses: 4,
    max_gens: 3,
    max_demands: 3,
    max_gamma: 2,
    max_periods: 3,
    max_candidates: 3,
};

#[derive(Debug, Clone)]
pub struct Case {
    pub seed: u64,
    pub net: Network,
    pub sets: Vec<UncertaintySetPeriod>,
}

fn line(id: u32, a: usize, b: usize, rng: &mut ChaCha8Rng, status: LineStatus) -> Line {
    Line {
        id: LineId(id),
        from_bus: BusId(a as u32),
        to_bus: BusId(b as u32),
        susceptance_s: rng.gen_range(50.0..500.0),
        capacity_mw: rng.gen_range(20.0..150.0),
        status,
        build_cost_eur: if status == LineStatus::Candidate {
            rng.gen_range(1e5..2e7)
        } else {
            0.0
        },
        name: None,
    }
}

pub fn random_case(seed: u64, shape: Shape) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = rng.gen_range(2..=shape.max_buses);
    let buses: Vec<Bus> = (1..=nb)
        .map(|i| Bus {
            id: BusId(i as u32),
            is_slack: i == 1,
        })
        .collect();

    let mut lines = Vec::new();
    // spanning tree so no island exists through existing lines alone
    for i in 2..=nb {
        let j = rng.gen_range(1..i);
        let id = lines.len() as u32 + 1;
        lines.push(line(id, j, i, &mut rng, LineStatus::Existing));
    }
    for _ in 0..rng.gen_range(0..=nb / 2) {
        let a = rng.gen_range(1..=nb);
        let b = rng.gen_range(1..=nb);
        if a != b {
            let id = lines.len() as u32 + 1;
            lines.push(line(id, a, b, &mut rng, LineStatus::Existing));
        }
    }
    for _ in 0..rng.gen_range(0..=shape.max_candidates) {
        let a = rng.gen_range(1..=nb);
        let mut b = rng.gen_range(1..=nb);
        if a == b {
            b = a % nb + 1;
        }
        let id = lines.len() as u32 + 1;
        lines.push(line(id, a, b, &mut rng, LineStatus::Candidate));
    }

    let ng = rng.gen_range(1..=shape.max_gens);
    let nd = rng.gen_range(1..=shape.max_demands);
    let generators: Vec<Generator> = (1..=ng)
        .map(|i| Generator {
            id: GenId(i as u32),
            bus: BusId(rng.gen_range(1..=nb) as u32),
            cost_eur_per_mwh: rng.gen_range(5.0..40.0),
        })
        .collect();
    let demands: Vec<Demand> = (1..=nd)
        .map(|i| Demand {
            id: DemandId(i as u32),
            bus: BusId(rng.gen_range(1..=nb) as u32),
            shed_cost_eur_per_mwh: rng.gen_range(60.0..200.0),
            shed_fraction: Vec::new(),
        })
        .collect();

    let n = rng.gen_range(1..=shape.max_periods);
    let cand_cost: f64 = lines.iter().map(|l| l.build_cost_eur).sum();
    let horizon = Horizon {
        n_periods: n,
        discount_rate: rng.gen_range(0.0..0.15),
        sigma_hours: if rng.gen_bool(0.5) { 8760.0 } else { 1.0 },
        budget_eur: cand_cost * rng.gen_range(0.3..1.5),
        angle_bound_rad: std::f64::consts::PI,
    };
    let net = Network::new(buses, lines, generators, demands, horizon).expect("random network is valid");

    let gen_nom: Vec<f64> = (0..ng).map(|_| rng.gen_range(30.0..200.0)).collect();
    let gen_dev: Vec<f64> = gen_nom.iter().map(|v| v * rng.gen_range(0.0..0.5)).collect();
    let dem_nom: Vec<f64> = (0..nd).map(|_| rng.gen_range(10.0..100.0)).collect();
    let dem_dev: Vec<f64> = dem_nom.iter().map(|v| v * rng.gen_range(0.0..0.3)).collect();
    let growth: f64 = rng.gen_range(0.0..0.2);
    let gamma_g = rng.gen_range(0..=shape.max_gamma.min(ng as u32));
    let gamma_d = rng.gen_range(0..=shape.max_gamma.min(nd as u32));
    let sets = (1..=n)
        .map(|t| {
            let m = (1.0 + growth).powi(t as i32 - 1);
            let ids_g = (1..=ng).map(|i| GenId(i as u32));
            let ids_d = (1..=nd).map(|i| DemandId(i as u32));
            UncertaintySetPeriod {
                period: t,
                gen_nominal_mw: ids_g.clone().zip(gen_nom.iter().map(|v| v * m)).collect(),
                gen_deviation_mw: ids_g.zip(gen_dev.iter().map(|v| v * m)).collect(),
                dem_nominal_mw: ids_d.clone().zip(dem_nom.iter().map(|v| v * m)).collect(),
                dem_deviation_mw: ids_d.zip(dem_dev.iter().map(|v| v * m)).collect(),
                gamma_g,
                gamma_d,
            }
        })
        .collect();
    Case { seed, net, sets }
}

/// Seeded pool used by the property criteria.
pub fn pool(base_seed: u64, count: usize, shape: Shape) -> Vec<Case> {
    (0..count as u64).map(|i| random_case(base_seed + i, shape)).collect()
}

/// Exact dynamic optimum by enumerating every build schedule (each
/// candidate: never, or one of the periods) and, for each period, every
/// vertex of that period's uncertainty set. Returns (objective, schedule).
pub fn extensive_form_optimum(
    net: &Network,
    sets: &[UncertaintySetPeriod],
    opts: &SolveOptions,
) -> (f64, BTreeMap<LineId, usize>) {
    let n = net.horizon().n_periods;
    let cands: Vec<&Line> = net.lines().iter().filter(|l| l.is_candidate()).collect();
    let disc: Vec<f64> = (1..=n)
        .map(|t| 1.0 / (1.0 + net.horizon().discount_rate).powi(t as i32 - 1))
        .collect();
    let mut cache: HashMap<(usize, Vec<bool>), f64> = HashMap::new();
    let mut best = (f64::INFINITY, BTreeMap::new());
    let combos = (n + 1).pow(cands.len() as u32);
    for code in 0..combos {
        let mut c = code;
        let mut sched = BTreeMap::new();
        let mut invest = 0.0;
        for l in &cands {
            let p = c % (n + 1);
            c /= n + 1;
            if p > 0 {
                sched.insert(l.id, p);
                invest += disc[p - 1] * l.build_cost_eur;
            }
        }
        if invest > net.horizon().budget_eur * (1.0 + 1e-12) {
            continue;
        }
        let mut total = invest;
        for t in 1..=n {
            let built: Vec<LineId> = sched.iter().filter(|(_, &p)| p <= t).map(|(&id, _)| id).collect();
            let topo = Topology::with_built(net, &built).unwrap();
            let key = (t, topo.flags().to_vec());
            let w = *cache.entry(key).or_insert_with(|| {
                worst_case_bruteforce(net, &topo, &sets[t - 1], t, opts)
                    .expect("bruteforce")
                    .0
            });
            total += disc[t - 1] * w;
        }
        if total < best.0 {
            best = (total, sched);
        }
    }
    best
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
