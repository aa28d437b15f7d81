//! Vehicle-fleet accounting: county fuel allocation, EV electricity demand
//! and ICV tailpipe emissions.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::dispatch::EvDemand;
use crate::grid::County;

/// Energy content of a gallon of gasoline, kWh (the MPGe definition).
pub const KWH_PER_GALLON_GASOLINE: f64 = 33.7;
pub const DAYS_PER_YEAR: f64 = 365.0;
/// Annual load growth.
pub const LOAD_GROWTH_RATE: f64 = 0.0055;
/// Annual population / motor-fuel growth.
pub const FUEL_GROWTH_RATE: f64 = 0.0058;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FleetError {
    #[error("state {0} has no counties with positive population")]
    EmptyState(String),
    #[error("no state fuel total for state {0}")]
    MissingStateFuel(String),
    #[error("invalid fleet assumption: {0}")]
    InvalidAssumption(String),
    #[error("growth rate {0} is below -1")]
    InvalidRate(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FleetAssumptions {
    pub icv_mpge: f64,
    pub ev_mpge: f64,
    /// Electricity an EV needs to replace one gallon of ICV fuel.
    pub kwh_per_gallon_ev: f64,
    pub kg_co2_per_gallon: f64,
    /// Fraction of vehicle fuel electrified, in [0,1].
    pub penetration: f64,
}

impl Default for FleetAssumptions {
    fn default() -> Self {
        FleetAssumptions {
            icv_mpge: 26.0,
            ev_mpge: 98.2,
            kwh_per_gallon_ev: 8.9,
            kg_co2_per_gallon: 8.9,
            penetration: 1.0,
        }
    }
}

impl FleetAssumptions {
    pub fn with_penetration(&self, penetration: f64) -> Self {
        FleetAssumptions {
            penetration,
            ..self.clone()
        }
    }

    /// kWh per gallon implied by the MPGe ratio.
    pub fn implied_kwh_per_gallon(&self) -> f64 {
        self.icv_mpge / self.ev_mpge * KWH_PER_GALLON_GASOLINE
    }

    /// Checks ranges; returns advisory warnings (MPGe inconsistency beyond 2%).
    pub fn validate(&self) -> Result<Vec<String>, FleetError> {
        let positive = [
            ("icv_mpge", self.icv_mpge),
            ("ev_mpge", self.ev_mpge),
            ("kwh_per_gallon_ev", self.kwh_per_gallon_ev),
            ("kg_co2_per_gallon", self.kg_co2_per_gallon),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(FleetError::InvalidAssumption(format!("{name} = {v} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.penetration) {
            return Err(FleetError::InvalidAssumption(format!(
                "penetration = {} outside [0,1]",
                self.penetration
            )));
        }
        let implied = self.implied_kwh_per_gallon();
        let mut warnings = Vec::new();
        if (implied - self.kwh_per_gallon_ev).abs() > 0.02 * self.kwh_per_gallon_ev {
            let msg = format!(
                "kwh_per_gallon_ev {} differs from the MPGe-implied {:.3} by more than 2%",
                self.kwh_per_gallon_ev, implied
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        Ok(warnings)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountyDemand {
    pub fips: String,
    /// EV energy per day, MWh
    pub e_c_daily_mwh: f64,
    pub icv_gallons_daily: f64,
}

/// Splits a state's annual fuel over its counties by population, in whole
/// gallons. The total is rounded to the nearest gallon, floors are assigned
/// first and the leftover gallons go to the largest remainders (earlier
/// county on ties), so the shares always sum to the rounded total.
pub fn allocate_state_fuel(state: &str, state_gallons: f64, populations: &[u64]) -> Result<Vec<f64>, FleetError> {
    if !(state_gallons.is_finite() && state_gallons >= 0.0) {
        return Err(FleetError::InvalidAssumption(format!(
            "state {state} fuel total {state_gallons}"
        )));
    }
    let total_pop: u128 = populations.iter().map(|&p| p as u128).sum();
    if total_pop == 0 {
        return Err(FleetError::EmptyState(state.to_string()));
    }
    let units = state_gallons.round() as u128;
    let mut shares: Vec<u128> = Vec::with_capacity(populations.len());
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(populations.len());
    for (i, &p) in populations.iter().enumerate() {
        let num = units * p as u128;
        shares.push(num / total_pop);
        remainders.push((num % total_pop, i));
    }
    let leftover = units - shares.iter().sum::<u128>();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(leftover as usize) {
        shares[i] += 1;
    }
    Ok(shares.into_iter().map(|s| s as f64).collect())
}

/// Fills `annual_gallons` of every county from its state's total.
pub fn apply_state_fuel(counties: &mut [County], state_gallons: &BTreeMap<String, f64>) -> Result<(), FleetError> {
    let mut by_state: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in counties.iter().enumerate() {
        by_state.entry(c.state.as_str()).or_default().push(i);
    }
    for state in state_gallons.keys() {
        if !by_state.contains_key(state.as_str()) {
            return Err(FleetError::EmptyState(state.clone()));
        }
    }
    let mut gallons = vec![0.0; counties.len()];
    for (state, members) in &by_state {
        let total = *state_gallons
            .get(*state)
            .ok_or_else(|| FleetError::MissingStateFuel(state.to_string()))?;
        let pops: Vec<u64> = members.iter().map(|&i| counties[i].population).collect();
        let shares = allocate_state_fuel(state, total, &pops)?;
        for (&i, s) in members.iter().zip(shares) {
            gallons[i] = s;
        }
    }
    for (c, g) in counties.iter_mut().zip(gallons) {
        c.annual_gallons = g;
    }
    Ok(())
}

/// Daily EV energy and remaining ICV fuel for one county.
pub fn county_ev_demand(fips: &str, annual_gallons: f64, a: &FleetAssumptions) -> CountyDemand {
    let daily = annual_gallons / DAYS_PER_YEAR;
    CountyDemand {
        fips: fips.to_string(),
        e_c_daily_mwh: daily * a.penetration * a.kwh_per_gallon_ev / 1000.0,
        icv_gallons_daily: daily * (1.0 - a.penetration),
    }
}

/// County demands at the assumptions' penetration, or at a per-county
/// override where one is given.
pub fn county_demands(
    counties: &[County],
    a: &FleetAssumptions,
    overrides: &BTreeMap<String, f64>,
) -> Vec<CountyDemand> {
    counties
        .iter()
        .map(|c| match overrides.get(&c.fips) {
            Some(&p) => county_ev_demand(&c.fips, c.annual_gallons, &a.with_penetration(p)),
            None => county_ev_demand(&c.fips, c.annual_gallons, a),
        })
        .collect()
}

/// The per-county energy map consumed by the dispatch models.
pub fn ev_demand_map(demands: &[CountyDemand]) -> EvDemand {
    demands
        .iter()
        .filter(|d| d.e_c_daily_mwh > 0.0)
        .map(|d| (d.fips.clone(), d.e_c_daily_mwh))
        .collect()
}

/// Tailpipe CO₂ of burning `gallons`, tonnes.
pub fn icv_emissions_t(gallons: f64, a: &FleetAssumptions) -> f64 {
    gallons * a.kg_co2_per_gallon / 1000.0
}

/// Annual tailpipe CO₂ of the remaining ICV fuel, tonnes.
pub fn icv_emissions_annual(demands: &[CountyDemand], a: &FleetAssumptions) -> f64 {
    let daily: f64 = demands.iter().map(|d| d.icv_gallons_daily).sum();
    icv_emissions_t(daily * DAYS_PER_YEAR, a)
}

/// e_V = e_EV + e_ICV.
pub fn vehicle_operational_emissions(e_ev_t: f64, e_icv_t: f64) -> f64 {
    e_ev_t + e_icv_t
}

/// `value × (1 + rate)^years`.
pub fn project_growth(value: f64, annual_rate: f64, years: f64) -> Result<f64, FleetError> {
    if annual_rate < -1.0 || annual_rate.is_nan() {
        return Err(FleetError::InvalidRate(annual_rate));
    }
    Ok(value * (1.0 + annual_rate).powf(years))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn symmetric_and_proportional_allocation() {
        assert_eq!(allocate_state_fuel("S", 100.0, &[1, 1]).unwrap(), vec![50.0, 50.0]);
        assert_eq!(allocate_state_fuel("S", 90.0, &[2, 1]).unwrap(), vec![60.0, 30.0]);
        let thirds = allocate_state_fuel("S", 100.0, &[1, 1, 1]).unwrap();
        assert_eq!(thirds.iter().sum::<f64>(), 100.0);
        assert_eq!(thirds, vec![34.0, 33.0, 33.0]);
    }

    #[test]
    fn empty_state_is_an_error() {
        assert_eq!(allocate_state_fuel("S", 10.0, &[]), Err(FleetError::EmptyState("S".into())));
        assert_eq!(allocate_state_fuel("S", 10.0, &[0, 0]), Err(FleetError::EmptyState("S".into())));
    }

    #[test]
    fn state_totals_fill_counties() {
        let county = |fips: &str, state: &str, pop| County {
            fips: fips.into(),
            state: state.into(),
            population: pop,
            annual_gallons: 0.0,
        };
        let mut counties = vec![county("1", "X", 2), county("2", "Y", 5), county("3", "X", 1)];
        let fuel: BTreeMap<String, f64> = [("X".to_string(), 90.0), ("Y".to_string(), 7.0)].into_iter().collect();
        apply_state_fuel(&mut counties, &fuel).unwrap();
        let g: Vec<f64> = counties.iter().map(|c| c.annual_gallons).collect();
        assert_eq!(g, vec![60.0, 7.0, 30.0]);

        let missing: BTreeMap<String, f64> = [("X".to_string(), 90.0)].into_iter().collect();
        assert_eq!(
            apply_state_fuel(&mut counties, &missing),
            Err(FleetError::MissingStateFuel("Y".into()))
        );
    }

    #[test]
    fn ev_demand_per_day() {
        let a = FleetAssumptions::default();
        let d = county_ev_demand("c", 365_000.0, &a);
        assert!((d.e_c_daily_mwh - 8.9).abs() < 1e-12);
        assert_eq!(d.icv_gallons_daily, 0.0);

        let none = county_ev_demand("c", 365_000.0, &a.with_penetration(0.0));
        assert_eq!(none.e_c_daily_mwh, 0.0);
        assert!((none.icv_gallons_daily - 1000.0).abs() < 1e-12);

        let half = county_ev_demand("c", 730_000.0, &a.with_penetration(0.5));
        assert!((half.e_c_daily_mwh - 8.9).abs() < 1e-12);
        assert!((half.icv_gallons_daily - 1000.0).abs() < 1e-12);
    }

    #[test]
    fn tailpipe_emissions() {
        let a = FleetAssumptions::default();
        assert!((icv_emissions_t(1000.0, &a) - 8.9).abs() < 1e-12);
        assert_eq!(icv_emissions_t(0.0, &a), 0.0);
        let national = icv_emissions_t(194e9, &a);
        assert!((national / 1.7266e9 - 1.0).abs() < 1e-3);
        let demands = vec![county_ev_demand("c", 365_000.0, &a.with_penetration(0.0))];
        assert!((icv_emissions_annual(&demands, &a) - 3248.5).abs() < 1e-9);
    }

    #[test]
    fn vehicle_total_is_a_sum() {
        assert_eq!(vehicle_operational_emissions(0.0, 100.0), 100.0);
        assert_eq!(vehicle_operational_emissions(5.0, 0.0), 5.0);
    }

    #[test]
    fn per_gallon_reduction_on_a_single_rate_grid() {
        // one gallon electrified draws 8.9 kWh at x t/GWh (= x g/kWh)
        let a = FleetAssumptions::default();
        for x in [0.0, 400.0, 1000.0] {
            let grid_kg = a.kwh_per_gallon_ev * x * 1e-3;
            let reduction = a.kg_co2_per_gallon - grid_kg;
            assert!((reduction - 8.9 * (1.0 - x * 1e-3)).abs() < 1e-12);
        }
    }

    #[test]
    fn growth_projection() {
        assert_eq!(project_growth(100.0, 0.0055, 0.0).unwrap(), 100.0);
        assert_eq!(project_growth(100.0, 0.0, 7.0).unwrap(), 100.0);
        let stepwise = (0..7).fold(100.0, |v, _| v * 1.0058);
        let projected = project_growth(100.0, FUEL_GROWTH_RATE, 7.0).unwrap();
        assert!((projected - stepwise).abs() < 1e-12);
        assert!((projected - 104.13).abs() < 5e-3);
        assert!(project_growth(1.0, -1.5, 1.0).is_err());
    }

    #[test]
    fn mpge_check_is_advisory() {
        let a = FleetAssumptions::default();
        assert!((a.implied_kwh_per_gallon() - 8.923).abs() < 1e-3);
        assert!(a.validate().unwrap().is_empty());
        let off = FleetAssumptions {
            kwh_per_gallon_ev: 12.0,
            ..a.clone()
        };
        assert_eq!(off.validate().unwrap().len(), 1);
        assert!(a.with_penetration(1.5).validate().is_err());
        assert!(FleetAssumptions { ev_mpge: 0.0, ..a }.validate().is_err());
    }

    proptest! {
        #[test]
        fn allocation_conserves_the_state_total(
            gallons in 0u64..10_000_000_000,
            pops in prop::collection::vec(0u64..5_000_000, 1..30),
        ) {
            prop_assume!(pops.iter().any(|&p| p > 0));
            let shares = allocate_state_fuel("S", gallons as f64, &pops).unwrap();
            let sum: u64 = shares.iter().map(|&s| s as u64).sum();
            prop_assert_eq!(sum, gallons);
            let total: u64 = pops.iter().sum();
            for (s, &p) in shares.iter().zip(&pops) {
                let exact = gallons as f64 * p as f64 / total as f64;
                prop_assert!((s - exact).abs() < 1.0 + 1e-6 * exact);
            }
        }

        #[test]
        fn demand_is_linear_and_trades_off_monotonically(
            gallons in 1.0f64..1e9,
            p1 in 0.0f64..1.0,
            p2 in 0.0f64..1.0,
        ) {
            let a = FleetAssumptions::default();
            let d1 = county_ev_demand("c", gallons, &a.with_penetration(p1));
            let d2 = county_ev_demand("c", gallons, &a.with_penetration(p2));
            let full = county_ev_demand("c", gallons, &a);
            prop_assert!((d1.e_c_daily_mwh - p1 * full.e_c_daily_mwh).abs() <= 1e-9 * full.e_c_daily_mwh);
            let doubled = county_ev_demand("c", 2.0 * gallons, &a.with_penetration(p1));
            prop_assert!((doubled.e_c_daily_mwh - 2.0 * d1.e_c_daily_mwh).abs() <= 1e-9 * doubled.e_c_daily_mwh.max(1.0));
            if p1 < p2 {
                prop_assert!(d1.e_c_daily_mwh < d2.e_c_daily_mwh);
                prop_assert!(d1.icv_gallons_daily > d2.icv_gallons_daily);
            }
        }
    }
}
