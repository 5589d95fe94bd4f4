//! Fixtures for the solver benchmarks.

use std::path::PathBuf;

use tnep_core::master::CutSet;
use tnep_core::{parse_instance, Instance, MasterLayout, Network, Realization, Result, UncertaintySetPeriod};

/// Bundled instance by file stem, e.g. `garver6`.
pub fn bundled(stem: &str) -> Result<Instance> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(format!("{stem}.json"));
    parse_instance(path)
}

pub struct Fixture {
    pub net: Network,
    pub sets: Vec<UncertaintySetPeriod>,
}

impl Fixture {
    pub fn load(stem: &str) -> Result<Self> {
        let inst = bundled(stem)?;
        let sets = inst.period_sets()?;
        Ok(Self { net: inst.network, sets })
    }

    pub fn last(&self) -> &UncertaintySetPeriod {
        self.sets.last().expect("instances have at least one period")
    }

    /// Static layout against the last period, as the planner sets it up.
    pub fn static_layout(&self) -> MasterLayout {
        let n = self.sets.len();
        MasterLayout::SingleEpoch {
            build_period: 1,
            eval_period: n,
            invest_weight: 1.0 / n as f64,
            op_weight: 1.0,
            budget_discount: 1.0,
            budget_left_eur: self.net.horizon().budget_eur,
        }
    }

    /// One cut holding the nominal point of the last period.
    pub fn nominal_cut(&self) -> Result<CutSet> {
        let real: Realization = self.last().nominal_realization();
        let mut cuts = CutSet::new(1);
        cuts.append(1, vec![real])?;
        Ok(cuts)
    }
}
