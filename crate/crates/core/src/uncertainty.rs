//! Per-period uncertainty sets and the realizations an adversary can pick.
//!
//! Generation capacity may only deviate downwards and demand only upwards, so a
//! realization is fully described by which units and loads sit at their
//! extreme value.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{DemandId, GenId};

/// Default enumeration cap for brute-force oracles.
pub const ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySetPeriod {
    pub period: usize,
    pub gen_nominal_mw: BTreeMap<GenId, f64>,
    pub gen_deviation_mw: BTreeMap<GenId, f64>,
    pub dem_nominal_mw: BTreeMap<DemandId, f64>,
    pub dem_deviation_mw: BTreeMap<DemandId, f64>,
    pub gamma_g: u32,
    pub gamma_d: u32,
}

impl UncertaintySetPeriod {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Validation(format!("period {}: {what}", self.period)));
        if !self.gen_nominal_mw.keys().eq(self.gen_deviation_mw.keys()) {
            return bad("generator nominal and deviation maps cover different units");
        }
        if !self.dem_nominal_mw.keys().eq(self.dem_deviation_mw.keys()) {
            return bad("demand nominal and deviation maps cover different loads");
        }
        for (id, &nom) in &self.gen_nominal_mw {
            let dev = self.gen_deviation_mw[id];
            if !(dev >= 0.0 && dev.is_finite() && nom.is_finite()) {
                return bad(&format!("generator {id} has an invalid deviation"));
            }
            if nom - dev < -1e-9 {
                return bad(&format!(
                    "generator {id} nominal {nom} minus deviation {dev} is negative"
                ));
            }
        }
        for (id, &nom) in &self.dem_nominal_mw {
            let dev = self.dem_deviation_mw[id];
            if !(dev >= 0.0 && dev.is_finite() && nom >= 0.0 && nom.is_finite()) {
                return bad(&format!("demand {id} has an invalid nominal or deviation"));
            }
        }
        if self.gamma_g as usize > self.gen_nominal_mw.len() {
            return bad(&format!(
                "gamma_g = {} exceeds the {} active generators",
                self.gamma_g,
                self.gen_nominal_mw.len()
            ));
        }
        if self.gamma_d as usize > self.dem_nominal_mw.len() {
            return bad(&format!(
                "gamma_d = {} exceeds the {} active demands",
                self.gamma_d,
                self.dem_nominal_mw.len()
            ));
        }
        Ok(())
    }

    pub fn nominal_realization(&self) -> Realization {
        Realization {
            gen_capacity_mw: self.gen_nominal_mw.clone(),
            demand_mw: self.dem_nominal_mw.clone(),
        }
    }
}

/// Multipliers applied to base nominal and deviation values.
///
/// Explicit tables are indexed by `t - 1`. Ids without a table grow at
/// `(1 + annual_rate)^(t - 1)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GrowthRule {
    pub annual_rate: f64,
    pub r_mu_g: BTreeMap<GenId, Vec<f64>>,
    pub r_sigma_g: BTreeMap<GenId, Vec<f64>>,
    pub r_mu_d: BTreeMap<DemandId, Vec<f64>>,
    pub r_sigma_d: BTreeMap<DemandId, Vec<f64>>,
    /// First period in which a unit or load exists; absent ids exist from t = 1.
    pub first_period_g: BTreeMap<GenId, usize>,
    pub first_period_d: BTreeMap<DemandId, usize>,
}

impl GrowthRule {
    pub fn annual(rate: f64) -> Self {
        Self {
            annual_rate: rate,
            ..Self::default()
        }
    }

    fn multiplier<K: Ord + std::fmt::Display>(
        &self,
        table: &BTreeMap<K, Vec<f64>>,
        id: &K,
        t: usize,
    ) -> Result<f64> {
        match table.get(id) {
            Some(v) => v.get(t - 1).copied().ok_or_else(|| {
                Error::Validation(format!(
                    "growth table for {id} has {} entries, period {t} requested",
                    v.len()
                ))
            }),
            None => Ok((1.0 + self.annual_rate).powi(t as i32 - 1)),
        }
    }

    fn validate(&self, n_periods: usize) -> Result<()> {
        if !(self.annual_rate > -1.0 && self.annual_rate.is_finite()) {
            return Err(Error::Validation("annual growth rate must exceed -1".into()));
        }
        let check = |name: &str, id: String, v: &Vec<f64>| -> Result<()> {
            if v.len() < n_periods {
                return Err(Error::Validation(format!(
                    "{name} table for {id} covers {} of {n_periods} periods",
                    v.len()
                )));
            }
            if (v[0] - 1.0).abs() > 1e-12 {
                return Err(Error::Validation(format!(
                    "{name} table for {id} must equal 1 at t = 1"
                )));
            }
            if v.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
                return Err(Error::Validation(format!(
                    "{name} table for {id} has a non-positive multiplier"
                )));
            }
            Ok(())
        };
        for (id, v) in &self.r_mu_g {
            check("gen nominal", format!("generator {id}"), v)?;
        }
        for (id, v) in &self.r_sigma_g {
            check("gen deviation", format!("generator {id}"), v)?;
        }
        for (id, v) in &self.r_mu_d {
            check("demand nominal", format!("demand {id}"), v)?;
        }
        for (id, v) in &self.r_sigma_d {
            check("demand deviation", format!("demand {id}"), v)?;
        }
        let firsts = self
            .first_period_g
            .values()
            .chain(self.first_period_d.values());
        if let Some(f) = firsts.into_iter().find(|&&f| f == 0) {
            return Err(Error::Validation(format!("first period {f} must be >= 1")));
        }
        Ok(())
    }
}

/// Which generators and demands sit at their extreme value.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RealizationChoice {
    pub z_g: BTreeSet<GenId>,
    pub z_d: BTreeSet<DemandId>,
}

impl RealizationChoice {
    pub fn is_empty(&self) -> bool {
        self.z_g.is_empty() && self.z_d.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub gen_capacity_mw: BTreeMap<GenId, f64>,
    pub demand_mw: BTreeMap<DemandId, f64>,
}

impl Realization {
    /// Componentwise equality within `tol` MW.
    pub fn approx_eq(&self, other: &Realization, tol: f64) -> bool {
        fn close<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>, tol: f64) -> bool {
            a.len() == b.len()
                && a.iter()
                    .zip(b.iter())
                    .all(|((ka, va), (kb, vb))| ka == kb && (va - vb).abs() <= tol)
        }
        close(&self.gen_capacity_mw, &other.gen_capacity_mw, tol)
            && close(&self.demand_mw, &other.demand_mw, tol)
    }
}

/// Builds the period sets `1..=n_periods` from a base set at t = 1.
pub fn evolve(
    base: &UncertaintySetPeriod,
    rule: &GrowthRule,
    n_periods: usize,
) -> Result<Vec<UncertaintySetPeriod>> {
    if base.period != 1 {
        return Err(Error::Contract(format!(
            "base set must be for period 1, got {}",
            base.period
        )));
    }
    if n_periods == 0 {
        return Err(Error::Contract("at least one period is required".into()));
    }
    rule.validate(n_periods)?;

    let mut out = Vec::with_capacity(n_periods);
    for t in 1..=n_periods {
        let mut set = UncertaintySetPeriod {
            period: t,
            gen_nominal_mw: BTreeMap::new(),
            gen_deviation_mw: BTreeMap::new(),
            dem_nominal_mw: BTreeMap::new(),
            dem_deviation_mw: BTreeMap::new(),
            gamma_g: base.gamma_g,
            gamma_d: base.gamma_d,
        };
        for (id, &nom) in &base.gen_nominal_mw {
            if rule.first_period_g.get(id).is_some_and(|&f| f > t) {
                continue;
            }
            let dev = base.gen_deviation_mw.get(id).copied().unwrap_or(0.0);
            set.gen_nominal_mw
                .insert(*id, nom * rule.multiplier(&rule.r_mu_g, id, t)?);
            set.gen_deviation_mw
                .insert(*id, dev * rule.multiplier(&rule.r_sigma_g, id, t)?);
        }
        for (id, &nom) in &base.dem_nominal_mw {
            if rule.first_period_d.get(id).is_some_and(|&f| f > t) {
                continue;
            }
            let dev = base.dem_deviation_mw.get(id).copied().unwrap_or(0.0);
            set.dem_nominal_mw
                .insert(*id, nom * rule.multiplier(&rule.r_mu_d, id, t)?);
            set.dem_deviation_mw
                .insert(*id, dev * rule.multiplier(&rule.r_sigma_d, id, t)?);
        }
        set.validate()?;
        out.push(set);
    }
    Ok(out)
}

pub fn realize(set: &UncertaintySetPeriod, choice: &RealizationChoice) -> Result<Realization> {
    if choice.z_g.len() > set.gamma_g as usize || choice.z_d.len() > set.gamma_d as usize {
        return Err(Error::Contract(format!(
            "choice with {} generators and {} demands exceeds budgets {}/{}",
            choice.z_g.len(),
            choice.z_d.len(),
            set.gamma_g,
            set.gamma_d
        )));
    }
    if let Some(g) = choice.z_g.iter().find(|g| !set.gen_nominal_mw.contains_key(g)) {
        return Err(Error::Contract(format!(
            "generator {g} is not active in period {}",
            set.period
        )));
    }
    if let Some(d) = choice.z_d.iter().find(|d| !set.dem_nominal_mw.contains_key(d)) {
        return Err(Error::Contract(format!(
            "demand {d} is not active in period {}",
            set.period
        )));
    }
    let gen_capacity_mw = set
        .gen_nominal_mw
        .iter()
        .map(|(id, &nom)| {
            let dev = if choice.z_g.contains(id) {
                set.gen_deviation_mw[id]
            } else {
                0.0
            };
            (*id, (nom - dev).max(0.0))
        })
        .collect();
    let demand_mw = set
        .dem_nominal_mw
        .iter()
        .map(|(id, &nom)| {
            let dev = if choice.z_d.contains(id) {
                set.dem_deviation_mw[id]
            } else {
                0.0
            };
            (*id, nom + dev)
        })
        .collect();
    Ok(Realization {
        gen_capacity_mw,
        demand_mw,
    })
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Number of subsets of an `n`-set with at most `k` elements.
pub fn subsets_up_to(n: usize, k: usize) -> u128 {
    (0..=k.min(n)).map(|i| binomial(n, i)).fold(0u128, u128::saturating_add)
}

/// Total number of choices `enumerate_choices` would yield.
pub fn choice_count(set: &UncertaintySetPeriod) -> u128 {
    subsets_up_to(set.gen_nominal_mw.len(), set.gamma_g as usize)
        .saturating_mul(subsets_up_to(set.dem_nominal_mw.len(), set.gamma_d as usize))
}

/// Subsets of `items` with at most `k` elements, by size then lexicographically.
fn subsets<T: Copy + Ord>(items: &[T], k: usize) -> Vec<BTreeSet<T>> {
    let mut out = vec![BTreeSet::new()];
    for size in 1..=k.min(items.len()) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            out.push(idx.iter().map(|&i| items[i]).collect());
            let mut pos = size;
            while pos > 0 && idx[pos - 1] == items.len() - size + pos - 1 {
                pos -= 1;
            }
            if pos == 0 {
                break;
            }
            idx[pos - 1] += 1;
            for j in pos..size {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
}

pub fn enumerate_choices(set: &UncertaintySetPeriod) -> Result<Vec<RealizationChoice>> {
    enumerate_choices_capped(set, ENUMERATION_CAP)
}

pub fn enumerate_choices_capped(
    set: &UncertaintySetPeriod,
    cap: u128,
) -> Result<Vec<RealizationChoice>> {
    let count = choice_count(set);
    if count > cap {
        return Err(Error::OracleTooLarge { count, cap });
    }
    let gens: Vec<GenId> = set.gen_nominal_mw.keys().copied().collect();
    let dems: Vec<DemandId> = set.dem_nominal_mw.keys().copied().collect();
    let gs = subsets(&gens, set.gamma_g as usize);
    let ds = subsets(&dems, set.gamma_d as usize);
    let mut out = Vec::with_capacity(count as usize);
    for zg in &gs {
        for zd in &ds {
            out.push(RealizationChoice {
                z_g: zg.clone(),
                z_d: zd.clone(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(gens: &[(u32, f64, f64)], dems: &[(u32, f64, f64)], gg: u32, gd: u32) -> UncertaintySetPeriod {
        UncertaintySetPeriod {
            period: 1,
            gen_nominal_mw: gens.iter().map(|&(i, n, _)| (GenId(i), n)).collect(),
            gen_deviation_mw: gens.iter().map(|&(i, _, d)| (GenId(i), d)).collect(),
            dem_nominal_mw: dems.iter().map(|&(i, n, _)| (DemandId(i), n)).collect(),
            dem_deviation_mw: dems.iter().map(|&(i, _, d)| (DemandId(i), d)).collect(),
            gamma_g: gg,
            gamma_d: gd,
        }
    }

    #[test]
    fn geometric_growth_matches_loop() {
        let base = set(&[], &[(1, 100.0, 20.0)], 0, 1);
        let sets = evolve(&base, &GrowthRule::annual(0.012), 25).unwrap();
        let mut acc = 100.0;
        for _ in 1..25 {
            acc *= 1.012;
        }
        let got = sets[24].dem_nominal_mw[&DemandId(1)];
        assert!((got - acc).abs() < 1e-9 * acc);
        assert!((got - 133.147).abs() < 1e-3);
        assert!((sets[24].dem_deviation_mw[&DemandId(1)] - acc * 0.2).abs() < 1e-9);
    }

    #[test]
    fn zero_growth_is_identity() {
        let base = set(&[(1, 80.0, 40.0)], &[(1, 100.0, 20.0)], 1, 1);
        let sets = evolve(&base, &GrowthRule::annual(0.0), 7).unwrap();
        for (t, s) in sets.iter().enumerate() {
            let mut expect = base.clone();
            expect.period = t + 1;
            assert_eq!(*s, expect);
        }
    }

    #[test]
    fn quarter_reduced_base_reaches_near_final_set() {
        // 0.75 * 1.012^24 is about 0.998, so the last period lands just under the
        // unreduced values rather than exactly on them.
        let base = set(&[], &[(1, 0.75 * 240.0, 0.75 * 48.0)], 0, 1);
        let sets = evolve(&base, &GrowthRule::annual(0.012), 25).unwrap();
        let last = sets[24].dem_nominal_mw[&DemandId(1)];
        let ratio = last / 240.0;
        assert!((ratio - 0.75 * 1.012f64.powi(24)).abs() < 1e-12);
        assert!((ratio - 1.0).abs() < 2.5e-3);
    }

    #[test]
    fn evolve_rejects_negative_capacity() {
        let base = set(&[(1, 80.0, 40.0)], &[], 1, 0);
        let mut rule = GrowthRule::default();
        rule.r_sigma_g.insert(GenId(1), vec![1.0, 3.0]);
        let err = evolve(&base, &rule, 2).unwrap_err();
        assert!(err.to_string().contains("negative"));
    }

    #[test]
    fn evolve_checks_table_shape() {
        let base = set(&[(1, 80.0, 40.0)], &[], 1, 0);
        let mut rule = GrowthRule::default();
        rule.r_mu_g.insert(GenId(1), vec![1.1, 1.2]);
        assert!(evolve(&base, &rule, 2).is_err());
        rule.r_mu_g.insert(GenId(1), vec![1.0]);
        assert!(evolve(&base, &rule, 2).is_err());
    }

    #[test]
    fn late_entries_join_their_period() {
        let base = set(&[(1, 80.0, 10.0), (2, 50.0, 10.0)], &[], 1, 0);
        let mut rule = GrowthRule::default();
        rule.first_period_g.insert(GenId(2), 3);
        let sets = evolve(&base, &rule, 4).unwrap();
        assert_eq!(sets[1].gen_nominal_mw.len(), 1);
        assert_eq!(sets[2].gen_nominal_mw.len(), 2);
    }

    #[test]
    fn realize_examples() {
        let s = set(&[(1, 80.0, 40.0)], &[(1, 100.0, 20.0)], 1, 1);
        let nominal = realize(&s, &RealizationChoice::default()).unwrap();
        assert_eq!(nominal, s.nominal_realization());
        let g = realize(
            &s,
            &RealizationChoice {
                z_g: [GenId(1)].into(),
                z_d: BTreeSet::new(),
            },
        )
        .unwrap();
        assert_eq!(g.gen_capacity_mw[&GenId(1)], 40.0);
        let d = realize(
            &s,
            &RealizationChoice {
                z_g: BTreeSet::new(),
                z_d: [DemandId(1)].into(),
            },
        )
        .unwrap();
        assert_eq!(d.demand_mw[&DemandId(1)], 120.0);
    }

    #[test]
    fn realize_rejects_budget_violation() {
        let s = set(&[(1, 80.0, 40.0), (2, 80.0, 40.0)], &[], 1, 0);
        let err = realize(
            &s,
            &RealizationChoice {
                z_g: [GenId(1), GenId(2)].into(),
                z_d: BTreeSet::new(),
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn enumeration_counts() {
        let s = set(&[(1, 1.0, 0.5), (2, 1.0, 0.5)], &[], 1, 0);
        let c = enumerate_choices(&s).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c[0].is_empty());
        assert_eq!(c[1].z_g, [GenId(1)].into());
        assert_eq!(c[2].z_g, [GenId(2)].into());

        let s = set(
            &[(1, 1.0, 0.5), (2, 1.0, 0.5), (3, 1.0, 0.5)],
            &[(1, 1.0, 0.5), (2, 1.0, 0.5)],
            2,
            2,
        );
        let c = enumerate_choices(&s).unwrap();
        assert_eq!(c.len(), 28);
        assert_eq!(choice_count(&s), 28);
        let unique: BTreeSet<_> = c.iter().cloned().collect();
        assert_eq!(unique.len(), 28);

        let s = set(&[(1, 1.0, 0.5)], &[(1, 1.0, 0.5)], 0, 0);
        assert_eq!(enumerate_choices(&s).unwrap().len(), 1);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let gens: Vec<_> = (1..=40).map(|i| (i, 10.0, 1.0)).collect();
        let s = set(&gens, &[], 20, 0);
        let err = enumerate_choices(&s).unwrap_err();
        assert!(err.to_string().contains("oracle too large"));
    }

    #[test]
    fn gamma_above_active_count_is_rejected() {
        let s = set(&[(1, 1.0, 0.5)], &[], 2, 0);
        assert!(s.validate().is_err());
    }

    fn brute_subsets(n: usize, k: usize) -> usize {
        (0u32..(1 << n)).filter(|m| m.count_ones() as usize <= k).count()
    }

    proptest! {
        #[test]
        fn enumeration_matches_bitmask_count(ng in 0usize..6, nd in 0usize..6, gg in 0u32..4, gd in 0u32..4) {
            let gg = gg.min(ng as u32);
            let gd = gd.min(nd as u32);
            let gens: Vec<_> = (1..=ng as u32).map(|i| (i, 10.0, 1.0)).collect();
            let dems: Vec<_> = (1..=nd as u32).map(|i| (i, 10.0, 1.0)).collect();
            let s = set(&gens, &dems, gg, gd);
            let c = enumerate_choices(&s).unwrap();
            prop_assert_eq!(c.len(), brute_subsets(ng, gg as usize) * brute_subsets(nd, gd as usize));
            let unique: BTreeSet<_> = c.iter().cloned().collect();
            prop_assert_eq!(unique.len(), c.len());
            for ch in &c {
                prop_assert!(ch.z_g.len() <= gg as usize && ch.z_d.len() <= gd as usize);
            }
        }

        #[test]
        fn realizations_stay_in_box(
            gens in prop::collection::vec((1.0f64..100.0, 0.0f64..1.0), 0..4),
            dems in prop::collection::vec((0.0f64..100.0, 0.0f64..50.0), 0..4),
            gg in 0u32..3, gd in 0u32..3,
        ) {
            let g: Vec<_> = gens.iter().enumerate().map(|(i, &(n, f))| (i as u32 + 1, n, n * f)).collect();
            let d: Vec<_> = dems.iter().enumerate().map(|(i, &(n, dev))| (i as u32 + 1, n, dev)).collect();
            let s = set(&g, &d, gg.min(g.len() as u32), gd.min(d.len() as u32));
            for ch in enumerate_choices(&s).unwrap() {
                let r = realize(&s, &ch).unwrap();
                for (id, &cap) in &r.gen_capacity_mw {
                    let (n, dev) = (s.gen_nominal_mw[id], s.gen_deviation_mw[id]);
                    prop_assert!(cap >= n - dev - 1e-12 && cap <= n + 1e-12);
                }
                for (id, &dem) in &r.demand_mw {
                    let (n, dev) = (s.dem_nominal_mw[id], s.dem_deviation_mw[id]);
                    prop_assert!(dem >= n - 1e-12 && dem <= n + dev + 1e-12);
                }
            }
        }

        #[test]
        fn evolve_nominal_equals_scaled_base(rate in -0.05f64..0.1, n in 1usize..12) {
            let base = set(&[(1, 80.0, 10.0)], &[(1, 50.0, 5.0)], 1, 1);
            let sets = evolve(&base, &GrowthRule::annual(rate), n).unwrap();
            for (i, s) in sets.iter().enumerate() {
                let r = realize(s, &RealizationChoice::default()).unwrap();
                let m = (1.0 + rate).powi(i as i32);
                prop_assert_eq!(r.demand_mw[&DemandId(1)], 50.0 * m);
                prop_assert_eq!(r.gen_capacity_mw[&GenId(1)], 80.0 * m);
            }
        }
    }
}
