//! Instance documents: a network plus its uncertainty description.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{Bus, Demand, DemandId, GenId, Generator, Horizon, Line, LineId, Network};
use crate::uncertainty::{evolve, GrowthRule, UncertaintySetPeriod};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseEntry<Id> {
    pub id: Id,
    pub nominal_mw: f64,
    pub deviation_mw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_period: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseDoc {
    #[serde(default)]
    pub generators: Vec<BaseEntry<GenId>>,
    #[serde(default)]
    pub demands: Vec<BaseEntry<DemandId>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierDoc {
    #[serde(default)]
    pub gen_nominal: BTreeMap<GenId, Vec<f64>>,
    #[serde(default)]
    pub gen_deviation: BTreeMap<GenId, Vec<f64>>,
    #[serde(default)]
    pub dem_nominal: BTreeMap<DemandId, Vec<f64>>,
    #[serde(default)]
    pub dem_deviation: BTreeMap<DemandId, Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthDoc {
    #[serde(default)]
    pub annual_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multipliers: Option<MultiplierDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyDoc {
    pub base: BaseDoc,
    #[serde(default)]
    pub growth: GrowthDoc,
    pub gamma_g: u32,
    pub gamma_d: u32,
    /// Experimental: `[gamma_g, gamma_d]` per period, overriding the constants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_per_period: Option<Vec<[u32; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDoc {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub demands: Vec<Demand>,
    pub horizon: Horizon,
    /// Candidate lines already built; they become existing lines on load.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prebuilt: Vec<LineId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<UncertaintyDoc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: String,
    pub provenance: Option<String>,
    pub network: Network,
    pub uncertainty: Option<UncertaintyDoc>,
}

impl Instance {
    pub fn from_doc(doc: InstanceDoc) -> Result<Self> {
        let network = Network::new(doc.buses, doc.lines, doc.generators, doc.demands, doc.horizon)?;
        let network = if doc.prebuilt.is_empty() {
            network
        } else {
            network.with_prebuilt(&doc.prebuilt)?
        };
        let inst = Self {
            name: doc.name,
            provenance: doc.provenance,
            network,
            uncertainty: doc.uncertainty,
        };
        if inst.uncertainty.is_some() {
            inst.period_sets()?;
        }
        Ok(inst)
    }

    pub fn to_doc(&self) -> InstanceDoc {
        let net = self.network.to_doc();
        InstanceDoc {
            name: self.name.clone(),
            provenance: self.provenance.clone(),
            buses: net.buses,
            lines: net.lines,
            generators: net.generators,
            demands: net.demands,
            horizon: net.horizon,
            prebuilt: Vec::new(),
            uncertainty: self.uncertainty.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("instance documents always serialize")
    }

    /// Replaces the budgets, dropping any per-period override.
    pub fn with_gammas(mut self, gamma_g: Option<u32>, gamma_d: Option<u32>) -> Result<Self> {
        if let Some(u) = self.uncertainty.as_mut() {
            if gamma_g.is_some() || gamma_d.is_some() {
                u.gamma_per_period = None;
            }
            if let Some(g) = gamma_g {
                u.gamma_g = g;
            }
            if let Some(d) = gamma_d {
                u.gamma_d = d;
            }
        } else if gamma_g.is_some() || gamma_d.is_some() {
            return Err(Error::Validation(
                "gamma override given but the instance has no uncertainty block".into(),
            ));
        }
        self.period_sets()?;
        Ok(self)
    }

    /// Uncertainty sets for periods `1..=n_periods`.
    pub fn period_sets(&self) -> Result<Vec<UncertaintySetPeriod>> {
        let u = self
            .uncertainty
            .as_ref()
            .ok_or_else(|| Error::Validation("instance has no uncertainty block".into()))?;
        let net = &self.network;
        let n = net.horizon().n_periods;

        let mut base = UncertaintySetPeriod {
            period: 1,
            gen_nominal_mw: BTreeMap::new(),
            gen_deviation_mw: BTreeMap::new(),
            dem_nominal_mw: BTreeMap::new(),
            dem_deviation_mw: BTreeMap::new(),
            gamma_g: u.gamma_g,
            gamma_d: u.gamma_d,
        };
        let mut rule = GrowthRule::annual(u.growth.annual_rate);
        for e in &u.base.generators {
            if net.generator(e.id).is_none() {
                return Err(Error::Validation(format!(
                    "uncertainty entry for unknown generator {}",
                    e.id
                )));
            }
            if base.gen_nominal_mw.insert(e.id, e.nominal_mw).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate uncertainty entry for generator {}",
                    e.id
                )));
            }
            base.gen_deviation_mw.insert(e.id, e.deviation_mw);
            if let Some(f) = e.first_period {
                rule.first_period_g.insert(e.id, f);
            }
        }
        for e in &u.base.demands {
            if net.demand(e.id).is_none() {
                return Err(Error::Validation(format!(
                    "uncertainty entry for unknown demand {}",
                    e.id
                )));
            }
            if base.dem_nominal_mw.insert(e.id, e.nominal_mw).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate uncertainty entry for demand {}",
                    e.id
                )));
            }
            base.dem_deviation_mw.insert(e.id, e.deviation_mw);
            if let Some(f) = e.first_period {
                rule.first_period_d.insert(e.id, f);
            }
        }
        if let Some(m) = &u.growth.multipliers {
            let unknown_g = m
                .gen_nominal
                .keys()
                .chain(m.gen_deviation.keys())
                .find(|id| !base.gen_nominal_mw.contains_key(id));
            if let Some(id) = unknown_g {
                return Err(Error::Validation(format!(
                    "growth table for generator {id} without a base entry"
                )));
            }
            let unknown_d = m
                .dem_nominal
                .keys()
                .chain(m.dem_deviation.keys())
                .find(|id| !base.dem_nominal_mw.contains_key(id));
            if let Some(id) = unknown_d {
                return Err(Error::Validation(format!(
                    "growth table for demand {id} without a base entry"
                )));
            }
            rule.r_mu_g = m.gen_nominal.clone();
            rule.r_sigma_g = m.gen_deviation.clone();
            rule.r_mu_d = m.dem_nominal.clone();
            rule.r_sigma_d = m.dem_deviation.clone();
        }

        // Budgets are checked per period below, after late entries are added.
        let mut unchecked = base.clone();
        unchecked.gamma_g = 0;
        unchecked.gamma_d = 0;
        let mut sets = evolve(&unchecked, &rule, n)?;
        for (i, s) in sets.iter_mut().enumerate() {
            let (g, d) = match &u.gamma_per_period {
                Some(v) => {
                    let [g, d] = *v.get(i).ok_or_else(|| {
                        Error::Validation(format!(
                            "gamma_per_period has {} entries for {n} periods",
                            v.len()
                        ))
                    })?;
                    (g, d)
                }
                None => (u.gamma_g, u.gamma_d),
            };
            s.gamma_g = g;
            s.gamma_d = d;
            s.validate()?;
        }
        Ok(sets)
    }
}

pub fn parse_instance_str(text: &str, origin: &str) -> Result<Instance> {
    let doc: InstanceDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
        origin: origin.to_string(),
        message: e.to_string(),
    })?;
    Instance::from_doc(doc)
}

pub fn parse_instance(path: impl AsRef<Path>) -> Result<Instance> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_instance_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::parse_network;

    const MINIMAL: &str = r#"{
        "buses": [{"id": 1, "is_slack": true}],
        "lines": [],
        "generators": [{"id": 1, "bus": 1, "cost_eur_per_mwh": 10}],
        "demands": [{"id": 1, "bus": 1, "shed_cost_eur_per_mwh": 100}],
        "horizon": {"n_periods": 2, "discount_rate": 0.1, "sigma_hours": 8760, "budget_eur": 0}
    }"#;

    fn with_uncertainty(extra: &str) -> String {
        MINIMAL.trim_end().trim_end_matches('}').to_string() + "," + extra + "}"
    }

    #[test]
    fn minimal_instance_parses() {
        let inst = parse_instance_str(MINIMAL, "minimal").unwrap();
        assert_eq!(inst.network.n_buses(), 1);
        assert_eq!(inst.network.lines().len(), 0);
        assert_eq!(inst.network.horizon().angle_bound_rad, std::f64::consts::PI);
        assert!(inst.period_sets().is_err());
    }

    #[test]
    fn dangling_bus_is_a_validation_error() {
        let text = MINIMAL.replace(r#""id": 1, "bus": 1, "shed"#, r#""id": 1, "bus": 99, "shed"#);
        let err = parse_instance_str(&text, "bad").unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("99")), "{err}");
    }

    #[test]
    fn schema_errors_name_field_and_line() {
        let text = MINIMAL.replace("\"sigma_hours\"", "\"sigma_hourz\"");
        let err = parse_instance_str(&text, "typo.json").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sigma_hourz") && msg.contains("line"), "{msg}");
        let text = MINIMAL.replace("\"lines\": []", "\"lines\": [{\"id\": 1}]");
        let err = parse_instance_str(&text, "short.json").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let text = MINIMAL.replace(
            r#""generators": [{"id": 1, "bus": 1, "cost_eur_per_mwh": 10}]"#,
            r#""generators": [{"id": 1, "bus": 1, "cost_eur_per_mwh": 10}, {"id": 1, "bus": 1, "cost_eur_per_mwh": 5}]"#,
        );
        let err = parse_instance_str(&text, "dup").unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn uncertainty_block_evolves() {
        let text = with_uncertainty(
            r#""uncertainty": {
                "base": {"generators": [{"id": 1, "nominal_mw": 100, "deviation_mw": 50}],
                         "demands": [{"id": 1, "nominal_mw": 80, "deviation_mw": 16}]},
                "growth": {"annual_rate": 0.1},
                "gamma_g": 1, "gamma_d": 1}"#,
        );
        let inst = parse_instance_str(&text, "u").unwrap();
        let sets = inst.period_sets().unwrap();
        assert_eq!(sets.len(), 2);
        assert!((sets[1].dem_nominal_mw[&DemandId(1)] - 88.0).abs() < 1e-9);
        assert!(inst.clone().with_gammas(Some(2), None).is_err());
        let zero = inst.with_gammas(Some(0), Some(0)).unwrap();
        assert_eq!(zero.period_sets().unwrap()[0].gamma_g, 0);
    }

    #[test]
    fn multiplier_tables_are_applied() {
        let text = with_uncertainty(
            r#""uncertainty": {
                "base": {"generators": [{"id": 1, "nominal_mw": 100, "deviation_mw": 50}], "demands": []},
                "growth": {"multipliers": {"gen_nominal": {"1": [1.0, 1.5]}}},
                "gamma_g": 1, "gamma_d": 0}"#,
        );
        let sets = parse_instance_str(&text, "m").unwrap().period_sets().unwrap();
        assert_eq!(sets[1].gen_nominal_mw[&GenId(1)], 150.0);
        assert_eq!(sets[1].gen_deviation_mw[&GenId(1)], 50.0);
    }

    #[test]
    fn round_trip_is_identity() {
        let text = with_uncertainty(
            r#""uncertainty": {
                "base": {"generators": [{"id": 1, "nominal_mw": 100, "deviation_mw": 50}], "demands": []},
                "gamma_g": 1, "gamma_d": 0}"#,
        );
        let a = parse_instance_str(&text, "a").unwrap();
        let b = parse_instance_str(&a.to_json(), "b").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parse_network_reads_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("net.json");
        std::fs::write(&p, MINIMAL).unwrap();
        let net = parse_network(&p).unwrap();
        assert_eq!(net.generators().len(), 1);
        let err = parse_network(dir.path().join("missing.json")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
