//! Power network and planning horizon.
//!
//! A [`Network`] is validated once at construction and is immutable afterwards.
//! Every physical and economic constant used by the dispatch, adversary and
//! master models is read from here.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(
    /// Bus identifier; buses are numbered contiguously from 1.
    BusId
);
id_type!(LineId);
id_type!(GenId);
id_type!(DemandId);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: BusId,
    #[serde(default)]
    pub is_slack: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineStatus {
    Existing,
    Candidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub id: LineId,
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// Flow per radian of angle difference, in MW/rad (per-unit susceptance times base MVA).
    #[serde(rename = "susceptance")]
    pub susceptance_s: f64,
    pub capacity_mw: f64,
    pub status: LineStatus,
    #[serde(default)]
    pub build_cost_eur: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl Line {
    pub fn is_candidate(&self) -> bool {
        self.status == LineStatus::Candidate
    }

    /// Corridor label `from-to` with the lower bus first.
    pub fn corridor(&self) -> String {
        let (a, b) = if self.from_bus <= self.to_bus {
            (self.from_bus, self.to_bus)
        } else {
            (self.to_bus, self.from_bus)
        };
        format!("{a}-{b}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub id: GenId,
    pub bus: BusId,
    pub cost_eur_per_mwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Demand {
    pub id: DemandId,
    pub bus: BusId,
    pub shed_cost_eur_per_mwh: f64,
    /// Maximum sheddable share of the demand, one entry per period. Filled with
    /// 1.0 when omitted.
    #[serde(default)]
    pub shed_fraction: Vec<f64>,
}

fn default_angle_bound() -> f64 {
    std::f64::consts::PI
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizon {
    pub n_periods: usize,
    pub discount_rate: f64,
    pub sigma_hours: f64,
    pub budget_eur: f64,
    #[serde(default = "default_angle_bound")]
    pub angle_bound_rad: f64,
}

impl Horizon {
    /// Sum of the discount factors over the whole horizon.
    pub fn annuity_factor(&self) -> f64 {
        (1..=self.n_periods)
            .map(|t| 1.0 / (1.0 + self.discount_rate).powi(t as i32 - 1))
            .sum()
    }
}

/// `1 / (1 + I)^(t - 1)` for `1 <= t <= n_periods`.
pub fn discount_factor(horizon: &Horizon, t: usize) -> Result<f64> {
    if t == 0 || t > horizon.n_periods {
        return Err(Error::PeriodOutOfRange {
            period: t,
            n_periods: horizon.n_periods,
        });
    }
    Ok(1.0 / (1.0 + horizon.discount_rate).powi(t as i32 - 1))
}

/// Serialized form of a network, also the network part of an instance file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDoc {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub demands: Vec<Demand>,
    pub horizon: Horizon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    buses: Vec<Bus>,
    lines: Vec<Line>,
    generators: Vec<Generator>,
    demands: Vec<Demand>,
    horizon: Horizon,
    slack: usize,
    line_pos: HashMap<LineId, usize>,
    gen_pos: HashMap<GenId, usize>,
    demand_pos: HashMap<DemandId, usize>,
}

impl Network {
    pub fn new(
        mut buses: Vec<Bus>,
        lines: Vec<Line>,
        generators: Vec<Generator>,
        mut demands: Vec<Demand>,
        horizon: Horizon,
    ) -> Result<Self> {
        validate_horizon(&horizon)?;

        if buses.is_empty() {
            return Err(Error::Validation("network has no buses".into()));
        }
        buses.sort_by_key(|b| b.id);
        for (i, bus) in buses.iter().enumerate() {
            if bus.id.0 as usize != i + 1 {
                return Err(Error::Validation(format!(
                    "bus ids must be unique and contiguous from 1; found {} at position {}",
                    bus.id,
                    i + 1
                )));
            }
        }
        let flagged: Vec<usize> = (0..buses.len()).filter(|&i| buses[i].is_slack).collect();
        let slack = match flagged.as_slice() {
            [] => {
                buses[0].is_slack = true;
                0
            }
            [one] => *one,
            many => {
                return Err(Error::Validation(format!(
                    "{} buses are flagged as slack; exactly one is allowed",
                    many.len()
                )))
            }
        };
        let n_buses = buses.len() as u32;
        let bus_ok = |b: BusId| b.0 >= 1 && b.0 <= n_buses;

        let mut line_pos = HashMap::new();
        for (i, line) in lines.iter().enumerate() {
            if line_pos.insert(line.id, i).is_some() {
                return Err(Error::Validation(format!("duplicate line id {}", line.id)));
            }
            if !bus_ok(line.from_bus) || !bus_ok(line.to_bus) {
                return Err(Error::Validation(format!(
                    "line {} references a nonexistent bus ({} -> {})",
                    line.id, line.from_bus, line.to_bus
                )));
            }
            if line.from_bus == line.to_bus {
                return Err(Error::Validation(format!(
                    "line {} starts and ends at bus {}",
                    line.id, line.from_bus
                )));
            }
            if !(line.susceptance_s.is_finite() && line.susceptance_s > 0.0) {
                return Err(Error::Validation(format!(
                    "line {} susceptance must be positive",
                    line.id
                )));
            }
            if !(line.capacity_mw.is_finite() && line.capacity_mw > 0.0) {
                return Err(Error::Validation(format!(
                    "line {} capacity must be positive",
                    line.id
                )));
            }
            match line.status {
                LineStatus::Candidate if !(line.build_cost_eur > 0.0 && line.build_cost_eur.is_finite()) => {
                    return Err(Error::Validation(format!(
                        "candidate line {} must carry a positive build cost",
                        line.id
                    )))
                }
                LineStatus::Existing if line.build_cost_eur != 0.0 => {
                    return Err(Error::Validation(format!(
                        "existing line {} must have zero build cost",
                        line.id
                    )))
                }
                _ => {}
            }
        }

        let mut gen_pos = HashMap::new();
        for (i, g) in generators.iter().enumerate() {
            if gen_pos.insert(g.id, i).is_some() {
                return Err(Error::Validation(format!("duplicate generator id {}", g.id)));
            }
            if !bus_ok(g.bus) {
                return Err(Error::Validation(format!(
                    "generator {} is at nonexistent bus {}",
                    g.id, g.bus
                )));
            }
            if !(g.cost_eur_per_mwh >= 0.0 && g.cost_eur_per_mwh.is_finite()) {
                return Err(Error::Validation(format!(
                    "generator {} cost must be non-negative",
                    g.id
                )));
            }
        }

        let n = horizon.n_periods;
        let mut demand_pos = HashMap::new();
        for (i, d) in demands.iter_mut().enumerate() {
            if demand_pos.insert(d.id, i).is_some() {
                return Err(Error::Validation(format!("duplicate demand id {}", d.id)));
            }
            if !bus_ok(d.bus) {
                return Err(Error::Validation(format!(
                    "demand {} is at nonexistent bus {}",
                    d.id, d.bus
                )));
            }
            if !(d.shed_cost_eur_per_mwh >= 0.0 && d.shed_cost_eur_per_mwh.is_finite()) {
                return Err(Error::Validation(format!(
                    "demand {} shedding cost must be non-negative",
                    d.id
                )));
            }
            if d.shed_fraction.is_empty() {
                d.shed_fraction = vec![1.0; n];
            }
            if d.shed_fraction.len() != n {
                return Err(Error::Validation(format!(
                    "demand {} has {} shed fractions for {} periods",
                    d.id,
                    d.shed_fraction.len(),
                    n
                )));
            }
            if let Some(e) = d.shed_fraction.iter().find(|e| !(0.0..=1.0).contains(*e)) {
                return Err(Error::Validation(format!(
                    "demand {} shed fraction {e} is outside [0, 1]",
                    d.id
                )));
            }
        }

        // A load that cannot be fully shed needs a generator or a line at its bus.
        let mut served: HashSet<BusId> = generators.iter().map(|g| g.bus).collect();
        for l in &lines {
            served.insert(l.from_bus);
            served.insert(l.to_bus);
        }
        let stranded: BTreeSet<u32> = demands
            .iter()
            .filter(|d| !served.contains(&d.bus) && d.shed_fraction.iter().any(|&e| e < 1.0))
            .map(|d| d.bus.0)
            .collect();
        if !stranded.is_empty() {
            return Err(Error::Validation(format!(
                "guaranteed-infeasible dispatch: partially sheddable load at isolated buses {:?}",
                stranded
            )));
        }

        Ok(Self {
            buses,
            lines,
            generators,
            demands,
            horizon,
            slack,
            line_pos,
            gen_pos,
            demand_pos,
        })
    }

    pub fn from_doc(doc: NetworkDoc) -> Result<Self> {
        Self::new(doc.buses, doc.lines, doc.generators, doc.demands, doc.horizon)
    }

    pub fn to_doc(&self) -> NetworkDoc {
        NetworkDoc {
            buses: self.buses.clone(),
            lines: self.lines.clone(),
            generators: self.generators.clone(),
            demands: self.demands.clone(),
            horizon: self.horizon.clone(),
        }
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }
    pub fn lines(&self) -> &[Line] {
        &self.lines
    }
    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }
    pub fn demands(&self) -> &[Demand] {
        &self.demands
    }
    pub fn horizon(&self) -> &Horizon {
        &self.horizon
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Position of the slack bus in [`Network::buses`].
    pub fn slack_index(&self) -> usize {
        self.slack
    }

    pub fn slack_bus(&self) -> BusId {
        self.buses[self.slack].id
    }

    /// Position of a bus; ids are contiguous so this is `id - 1`.
    pub fn bus_index(&self, id: BusId) -> usize {
        id.0 as usize - 1
    }

    pub fn line(&self, id: LineId) -> Option<&Line> {
        self.line_pos.get(&id).map(|&i| &self.lines[i])
    }
    pub fn line_index(&self, id: LineId) -> Option<usize> {
        self.line_pos.get(&id).copied()
    }
    pub fn generator(&self, id: GenId) -> Option<&Generator> {
        self.gen_pos.get(&id).map(|&i| &self.generators[i])
    }
    pub fn demand(&self, id: DemandId) -> Option<&Demand> {
        self.demand_pos.get(&id).map(|&i| &self.demands[i])
    }

    pub fn candidates(&self) -> impl Iterator<Item = &Line> {
        self.lines.iter().filter(|l| l.is_candidate())
    }

    pub fn n_candidates(&self) -> usize {
        self.candidates().count()
    }

    pub fn discount_factor(&self, t: usize) -> Result<f64> {
        discount_factor(&self.horizon, t)
    }

    /// Shed fraction `e_j` of a demand in period `t` (1-based).
    pub fn shed_fraction(&self, id: DemandId, t: usize) -> Result<f64> {
        let d = self
            .demand(id)
            .ok_or_else(|| Error::Contract(format!("unknown demand {id}")))?;
        d.shed_fraction
            .get(t.wrapping_sub(1))
            .copied()
            .ok_or(Error::PeriodOutOfRange {
                period: t,
                n_periods: self.horizon.n_periods,
            })
    }

    /// Highest load-shedding cost in the network, in EUR/MWh.
    pub fn max_shed_cost(&self) -> f64 {
        self.demands
            .iter()
            .map(|d| d.shed_cost_eur_per_mwh)
            .fold(0.0, f64::max)
    }

    /// Converts the listed candidate lines into existing ones with no build cost.
    pub fn with_prebuilt(&self, ids: &[LineId]) -> Result<Self> {
        let mut lines = self.lines.clone();
        for id in ids {
            let i = self
                .line_index(*id)
                .ok_or_else(|| Error::Validation(format!("prebuilt line {id} does not exist")))?;
            if !lines[i].is_candidate() {
                return Err(Error::Validation(format!(
                    "prebuilt line {id} is not a candidate"
                )));
            }
            lines[i].status = LineStatus::Existing;
            lines[i].build_cost_eur = 0.0;
        }
        Self::new(
            self.buses.clone(),
            lines,
            self.generators.clone(),
            self.demands.clone(),
            self.horizon.clone(),
        )
    }

    /// Same network with a different horizon; shed fractions are truncated or
    /// padded with 1.0.
    pub fn with_horizon(&self, horizon: Horizon) -> Result<Self> {
        let n = horizon.n_periods;
        let demands = self
            .demands
            .iter()
            .map(|d| {
                let mut d = d.clone();
                d.shed_fraction.resize(n, 1.0);
                d
            })
            .collect();
        Self::new(
            self.buses.clone(),
            self.lines.clone(),
            self.generators.clone(),
            demands,
            horizon,
        )
    }
}

impl Serialize for Network {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_doc().serialize(serializer)
    }
}

fn validate_horizon(h: &Horizon) -> Result<()> {
    if h.n_periods == 0 {
        return Err(Error::Validation("horizon needs at least one period".into()));
    }
    if !(h.discount_rate >= 0.0 && h.discount_rate.is_finite()) {
        return Err(Error::Validation("discount rate must be >= 0".into()));
    }
    if !(h.sigma_hours > 0.0 && h.sigma_hours.is_finite()) {
        return Err(Error::Validation("sigma_hours must be > 0".into()));
    }
    if !(h.budget_eur >= 0.0 && h.budget_eur.is_finite()) {
        return Err(Error::Validation("budget must be >= 0".into()));
    }
    if !(h.angle_bound_rad > 0.0 && h.angle_bound_rad.is_finite()) {
        return Err(Error::Validation("angle bound must be > 0".into()));
    }
    Ok(())
}

/// Reads and validates the network part of an instance file.
pub fn parse_network(path: impl AsRef<Path>) -> Result<Network> {
    crate::instance::parse_instance(path).map(|inst| inst.network)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn horizon(n: usize, rate: f64) -> Horizon {
        Horizon {
            n_periods: n,
            discount_rate: rate,
            sigma_hours: 1.0,
            budget_eur: 1e9,
            angle_bound_rad: std::f64::consts::PI,
        }
    }

    fn line(id: u32, from: u32, to: u32, status: LineStatus, cost: f64) -> Line {
        Line {
            id: LineId(id),
            from_bus: BusId(from),
            to_bus: BusId(to),
            susceptance_s: 100.0,
            capacity_mw: 50.0,
            status,
            build_cost_eur: cost,
            name: None,
        }
    }

    fn two_bus(demand_bus: u32, lines: Vec<Line>, e: f64) -> Result<Network> {
        Network::new(
            vec![Bus { id: BusId(1), is_slack: false }, Bus { id: BusId(2), is_slack: false }],
            lines,
            vec![Generator { id: GenId(1), bus: BusId(1), cost_eur_per_mwh: 10.0 }],
            vec![Demand {
                id: DemandId(1),
                bus: BusId(demand_bus),
                shed_cost_eur_per_mwh: 100.0,
                shed_fraction: vec![e; 2],
            }],
            horizon(2, 0.1),
        )
    }

    #[test]
    fn discount_factor_examples() {
        let h = horizon(25, 0.1);
        assert_eq!(discount_factor(&h, 1).unwrap(), 1.0);
        assert!((discount_factor(&h, 2).unwrap() - 1.0 / 1.1).abs() < 1e-15);
        let flat = horizon(25, 0.0);
        assert_eq!(discount_factor(&flat, 25).unwrap(), 1.0);
        assert!(matches!(
            discount_factor(&h, 0),
            Err(Error::PeriodOutOfRange { period: 0, .. })
        ));
        assert!(discount_factor(&h, 26).is_err());
    }

    #[test]
    fn discount_factor_is_monotone() {
        let h = horizon(30, 0.07);
        for t in 1..30 {
            assert!(discount_factor(&h, t + 1).unwrap() < discount_factor(&h, t).unwrap());
        }
        let flat = horizon(30, 0.0);
        for t in 1..=30 {
            assert_eq!(discount_factor(&flat, t).unwrap(), 1.0);
        }
    }

    #[test]
    fn slack_defaults_to_lowest_bus() {
        let net = two_bus(2, vec![line(1, 1, 2, LineStatus::Existing, 0.0)], 1.0).unwrap();
        assert_eq!(net.slack_bus(), BusId(1));
        assert!(net.buses()[0].is_slack);
    }

    #[test]
    fn rejects_two_slack_buses() {
        let err = Network::new(
            vec![Bus { id: BusId(1), is_slack: true }, Bus { id: BusId(2), is_slack: true }],
            vec![],
            vec![],
            vec![],
            horizon(1, 0.0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn rejects_noncontiguous_bus_ids() {
        let err = Network::new(
            vec![Bus { id: BusId(1), is_slack: false }, Bus { id: BusId(3), is_slack: false }],
            vec![],
            vec![],
            vec![],
            horizon(1, 0.0),
        )
        .unwrap_err();
        assert!(err.to_string().contains("contiguous"));
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(two_bus(2, vec![line(1, 1, 1, LineStatus::Existing, 0.0)], 1.0).is_err());
        assert!(two_bus(2, vec![line(1, 1, 3, LineStatus::Existing, 0.0)], 1.0).is_err());
        assert!(two_bus(2, vec![line(1, 1, 2, LineStatus::Candidate, 0.0)], 1.0).is_err());
        assert!(two_bus(
            2,
            vec![
                line(1, 1, 2, LineStatus::Existing, 0.0),
                line(1, 1, 2, LineStatus::Candidate, 5.0)
            ],
            1.0
        )
        .is_err());
    }

    #[test]
    fn parallel_lines_are_distinct() {
        let net = two_bus(
            2,
            vec![
                line(1, 1, 2, LineStatus::Existing, 0.0),
                line(2, 1, 2, LineStatus::Candidate, 5.0),
                line(3, 2, 1, LineStatus::Candidate, 5.0),
            ],
            1.0,
        )
        .unwrap();
        assert_eq!(net.n_candidates(), 2);
        assert_eq!(net.line(LineId(3)).unwrap().corridor(), "1-2");
    }

    #[test]
    fn stranded_partial_load_is_rejected() {
        // Demand at bus 2 with no line and no generator, not fully sheddable.
        let err = two_bus(2, vec![], 0.5).unwrap_err();
        assert!(err.to_string().contains("guaranteed-infeasible"));
        // Fully sheddable is fine.
        assert!(two_bus(2, vec![], 1.0).is_ok());
    }

    #[test]
    fn shed_fraction_defaults_to_one() {
        let net = Network::new(
            vec![Bus { id: BusId(1), is_slack: true }],
            vec![],
            vec![Generator { id: GenId(1), bus: BusId(1), cost_eur_per_mwh: 1.0 }],
            vec![Demand {
                id: DemandId(1),
                bus: BusId(1),
                shed_cost_eur_per_mwh: 3.0,
                shed_fraction: vec![],
            }],
            horizon(4, 0.0),
        )
        .unwrap();
        assert_eq!(net.demands()[0].shed_fraction, vec![1.0; 4]);
        assert_eq!(net.shed_fraction(DemandId(1), 4).unwrap(), 1.0);
        assert!(net.shed_fraction(DemandId(1), 5).is_err());
    }

    #[test]
    fn prebuilt_turns_candidates_into_existing() {
        let net = two_bus(
            2,
            vec![line(1, 1, 2, LineStatus::Existing, 0.0), line(2, 1, 2, LineStatus::Candidate, 5.0)],
            1.0,
        )
        .unwrap();
        let pre = net.with_prebuilt(&[LineId(2)]).unwrap();
        assert_eq!(pre.n_candidates(), 0);
        assert!(net.with_prebuilt(&[LineId(1)]).is_err());
    }
}
