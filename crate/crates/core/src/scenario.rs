//! Study scenarios: representative-day loads, renewable-capacity scaling,
//! annualization and penetration × renewable-level sweeps.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dispatch::{
    relax_network, solve_model_one, solve_model_two, DispatchError, EvDemand, HourlyLoads,
};
use crate::fleet::{
    county_demands, ev_demand_map, icv_emissions_annual, project_growth, FleetAssumptions, FleetError,
    FUEL_GROWTH_RATE, LOAD_GROWTH_RATE,
};
use crate::grid::{islands, Fuel, GridCase, HOURS_PER_DAY};
use crate::ptdf::{NetworkPtdf, PtdfError};

/// Days per month of a non-leap year.
pub const DAYS_IN_MONTH: [u32; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
pub const HOURS_PER_YEAR: usize = 8760;
/// Differences this far below zero are treated as solver noise.
const CONGESTION_NOISE_T: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("region {region}: history has {got} hourly values, expected 8760")]
    IncompleteHistory { region: String, got: usize },
    #[error("region {region}: history contains a negative or non-numeric value at hour {hour}")]
    InvalidHistory { region: String, hour: usize },
    #[error("no load curve for region {0}")]
    MissingRegionCurve(String),
    #[error("region {region}: curve has {got} values, expected {expected}")]
    CurveLength { region: String, expected: usize, got: usize },
    #[error("no solar or wind capacity to scale")]
    NoVariableRenewables,
    #[error("renewable level {target} is below the hydro-only floor {floor:.6}")]
    UnreachableLevel { target: f64, floor: f64 },
    #[error("renewable level {0} must lie in [0, 1)")]
    InvalidTarget(f64),
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Fleet(#[from] FleetError),
    #[error(transparent)]
    Ptdf(#[from] PtdfError),
}

/// Average daily shape of one region in one month, normalized by the
/// region's annual peak.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepresentativeDay {
    pub region: String,
    /// 1..=12
    pub month: u32,
    pub curve: Vec<f64>,
}

/// Twelve representative days per region from a year of hourly history
/// (non-leap, hour 0 = Jan 1 00:00). Output is ordered by region, then month.
pub fn representative_days(history: &BTreeMap<String, Vec<f64>>) -> Result<Vec<RepresentativeDay>, ScenarioError> {
    let mut out = Vec::with_capacity(history.len() * 12);
    for (region, values) in history {
        if values.len() != HOURS_PER_YEAR {
            return Err(ScenarioError::IncompleteHistory {
                region: region.clone(),
                got: values.len(),
            });
        }
        if let Some(hour) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(ScenarioError::InvalidHistory {
                region: region.clone(),
                hour,
            });
        }
        let peak = values.iter().copied().fold(0.0, f64::max);
        let mut start_day = 0usize;
        for (m, &days) in DAYS_IN_MONTH.iter().enumerate() {
            let days = days as usize;
            let curve = (0..HOURS_PER_DAY)
                .map(|h| {
                    let mean = (start_day..start_day + days)
                        .map(|d| values[d * HOURS_PER_DAY + h])
                        .sum::<f64>()
                        / days as f64;
                    if peak > 0.0 {
                        mean / peak
                    } else {
                        0.0
                    }
                })
                .collect();
            out.push(RepresentativeDay {
                region: region.clone(),
                month: m as u32 + 1,
                curve,
            });
            start_day += days;
        }
    }
    Ok(out)
}

/// Region → curve for one month.
pub fn curves_for_month(days: &[RepresentativeDay], month: u32) -> BTreeMap<String, Vec<f64>> {
    days.iter()
        .filter(|d| d.month == month)
        .map(|d| (d.region.clone(), d.curve.clone()))
        .collect()
}

/// `loads[i][t] = peak_mw(i) × curve(region(i), t)`.
pub fn scale_bus_loads(case: &GridCase, curves: &BTreeMap<String, Vec<f64>>) -> Result<HourlyLoads, ScenarioError> {
    let steps = case.time_grid.steps;
    case.loads
        .iter()
        .map(|d| {
            let curve = curves
                .get(&d.region)
                .ok_or_else(|| ScenarioError::MissingRegionCurve(d.region.clone()))?;
            if curve.len() != steps {
                return Err(ScenarioError::CurveLength {
                    region: d.region.clone(),
                    expected: steps,
                    got: curve.len(),
                });
            }
            Ok(curve.iter().map(|c| d.peak_mw * c).collect())
        })
        .collect()
}

/// Installed capacity split used by the renewable level.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CapacityMix {
    /// solar + wind
    pub variable: f64,
    pub hydro: f64,
    pub nonrenewable: f64,
}

impl CapacityMix {
    /// Renewable integration level: (S + W + H) / total.
    pub fn level(&self) -> f64 {
        let total = self.variable + self.hydro + self.nonrenewable;
        if total > 0.0 {
            (self.variable + self.hydro) / total
        } else {
            0.0
        }
    }
}

/// Capacity mix of the generators on `buses` (all buses when `None`).
pub fn capacity_mix(case: &GridCase, buses: Option<&[usize]>) -> CapacityMix {
    let index = case.bus_index();
    let mut mix = CapacityMix::default();
    for g in &case.generators {
        if let Some(set) = buses {
            match index.get(g.bus.as_str()) {
                Some(b) if set.contains(b) => {}
                _ => continue,
            }
        }
        match g.fuel {
            Fuel::Solar | Fuel::Wind => mix.variable += g.capacity_mw,
            Fuel::Hydro => mix.hydro += g.capacity_mw,
            _ => mix.nonrenewable += g.capacity_mw,
        }
    }
    mix
}

/// Factor `s` on solar and wind capacity that brings the level to `target`:
/// `s = (target·(H + NR) − H) / ((1 − target)·(S + W))`.
pub fn renewable_scale_factor(mix: &CapacityMix, target: f64) -> Result<f64, ScenarioError> {
    if !(0.0..1.0).contains(&target) {
        return Err(ScenarioError::InvalidTarget(target));
    }
    if mix.variable <= 0.0 {
        return Err(ScenarioError::NoVariableRenewables);
    }
    let s = (target * (mix.hydro + mix.nonrenewable) - mix.hydro) / ((1.0 - target) * mix.variable);
    if s < 0.0 {
        return Err(ScenarioError::UnreachableLevel {
            target,
            floor: mix.hydro / (mix.hydro + mix.nonrenewable),
        });
    }
    Ok(s)
}

/// Multiplies solar and wind capacity (and their ramp limits) by `s` on
/// `buses` (all buses when `None`); profiles and other units are untouched.
pub fn apply_renewable_scaling(case: &GridCase, s: f64, buses: Option<&[usize]>) -> GridCase {
    let index = case.bus_index();
    let mut out = case.clone();
    for g in &mut out.generators {
        if !g.fuel.is_variable_renewable() {
            continue;
        }
        if let Some(set) = buses {
            match index.get(g.bus.as_str()) {
                Some(b) if set.contains(b) => {}
                _ => continue,
            }
        }
        g.capacity_mw *= s;
        g.ramp_up_mw_per_h *= s;
        g.ramp_down_mw_per_h *= s;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelMode {
    /// Each island is scaled to the target on its own.
    PerIsland,
    /// One shared factor brings the whole system to the target.
    System,
}

/// Scales `case` to the renewable `target`; returns the scaled case and the
/// factor used per island (one entry in system mode).
pub fn scale_to_level(case: &GridCase, target: f64, mode: LevelMode) -> Result<(GridCase, Vec<f64>), ScenarioError> {
    match mode {
        LevelMode::System => {
            let s = renewable_scale_factor(&capacity_mix(case, None), target)?;
            Ok((apply_renewable_scaling(case, s, None), vec![s]))
        }
        LevelMode::PerIsland => {
            let mut out = case.clone();
            let mut factors = Vec::new();
            for island in islands(case) {
                let mix = capacity_mix(case, Some(&island));
                if mix.variable + mix.hydro + mix.nonrenewable == 0.0 {
                    continue;
                }
                let s = renewable_scale_factor(&mix, target)?;
                out = apply_renewable_scaling(&out, s, Some(&island));
                factors.push(s);
            }
            Ok((out, factors))
        }
    }
}

/// Representative days used to stand for a year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DaySet {
    /// One day per calendar month, weighted by its length.
    Months,
    /// January, April, July and October, each standing for a quarter.
    Seasons,
}

impl DaySet {
    /// (month, weight in days); weights sum to 365.
    pub fn members(self) -> Vec<(u32, f64)> {
        match self {
            DaySet::Months => (1..=12).zip(DAYS_IN_MONTH.iter().map(|&d| d as f64)).collect(),
            DaySet::Seasons => vec![(1, 90.0), (4, 92.0), (7, 92.0), (10, 91.0)],
        }
    }
}

impl fmt::Display for DaySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DaySet::Months => "months",
            DaySet::Seasons => "seasons",
        })
    }
}

/// Annual total from 12 per-month daily values, weighted by non-leap month length.
pub fn annualize(monthly_daily: &[f64]) -> Result<f64, ScenarioError> {
    if monthly_daily.len() != 12 {
        return Err(ScenarioError::InvalidSpec(format!(
            "annualize needs 12 monthly values, got {}",
            monthly_daily.len()
        )));
    }
    Ok(monthly_daily
        .iter()
        .zip(DAYS_IN_MONTH)
        .map(|(v, d)| v * d as f64)
        .sum())
}

/// Weighted annual total for any day set.
pub fn annualize_weighted(daily: &[f64], day_set: DaySet) -> f64 {
    daily.iter().zip(day_set.members()).map(|(v, (_, w))| v * w).sum()
}

/// Constrained minus relaxed EV emissions, with tiny negatives clamped to 0.
pub fn congestion_difference(constrained_t: f64, relaxed_t: f64) -> f64 {
    let d = constrained_t - relaxed_t;
    if (-CONGESTION_NOISE_T..0.0).contains(&d) {
        0.0
    } else {
        d
    }
}

/// Emissions caused only by line limits: Model II on `case` minus Model II
/// on the relaxed network, both around the same constrained base dispatch.
pub fn congestion_induced(
    case: &GridCase,
    loads: &[Vec<f64>],
    demand: &EvDemand,
    ptdf: &NetworkPtdf,
) -> Result<f64, ScenarioError> {
    let base = solve_model_one(case, loads, ptdf)?;
    let tight = solve_model_two(case, loads, &base, demand, ptdf)?;
    let loose = solve_model_two(&relax_network(case), loads, &base, demand, ptdf)?;
    Ok(congestion_difference(tight.e_ev_t, loose.e_ev_t))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub penetrations: Vec<f64>,
    /// `None` keeps the case's own mix.
    pub renewable_levels: Vec<Option<f64>>,
    pub level_mode: LevelMode,
    /// Also run every cell on the relaxed network.
    pub include_relaxed: bool,
    pub day_set: DaySet,
    /// Years of load and fuel growth applied before solving.
    pub growth_years: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            penetrations: vec![0.0, 0.5, 1.0],
            renewable_levels: vec![None],
            level_mode: LevelMode::PerIsland,
            include_relaxed: true,
            day_set: DaySet::Months,
            growth_years: 0.0,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.penetrations.is_empty() || self.renewable_levels.is_empty() {
            return Err(ScenarioError::InvalidSpec("empty penetration or level list".into()));
        }
        if let Some(p) = self.penetrations.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(ScenarioError::InvalidSpec(format!("penetration {p} outside [0,1]")));
        }
        if let Some(l) = self.renewable_levels.iter().flatten().find(|l| !(0.0..1.0).contains(*l)) {
            return Err(ScenarioError::InvalidTarget(*l));
        }
        if !self.growth_years.is_finite() {
            return Err(ScenarioError::InvalidSpec("growth_years must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkMode {
    Constrained,
    Relaxed,
}

impl fmt::Display for NetworkMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NetworkMode::Constrained => "constrained",
            NetworkMode::Relaxed => "relaxed",
        })
    }
}

/// One sweep cell. Emission fields are `None` when the cell failed; the
/// reason is in `status`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub penetration: f64,
    pub renewable_level: Option<f64>,
    pub mode: NetworkMode,
    pub e_ev_t: Option<f64>,
    pub e_icv_t: f64,
    pub e_v_t: Option<f64>,
    pub congestion_induced_t: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub slack_buses: Vec<String>,
    pub day_set: DaySet,
    pub flags: Vec<String>,
}

/// Flag: annual totals weight representative days by non-leap calendar days.
pub const FLAG_NON_LEAP_WEIGHTS: &str = "annualized_with_non_leap_day_weights";

/// Short machine-readable status for a failed cell.
pub fn status_of(err: &ScenarioError) -> &'static str {
    match err {
        ScenarioError::Dispatch(DispatchError::InfeasibleBaseCase { .. }) => "infeasible_base_case",
        ScenarioError::Dispatch(DispatchError::InfeasibleEvDemand { .. }) => "infeasible_ev_demand",
        ScenarioError::Dispatch(DispatchError::InfeasibleTarget { .. }) => "infeasible_target",
        ScenarioError::Dispatch(DispatchError::Grid(_)) => "no_eligible_bus",
        ScenarioError::UnreachableLevel { .. } => "unreachable_level",
        ScenarioError::NoVariableRenewables => "no_variable_renewables",
        _ => "error",
    }
}

/// Loads of `month` on `case`, grown by `growth` (a multiplier).
pub fn month_loads(
    case: &GridCase,
    curves: &[RepresentativeDay],
    month: u32,
    growth: f64,
) -> Result<HourlyLoads, ScenarioError> {
    let mut loads = scale_bus_loads(case, &curves_for_month(curves, month))?;
    for d in loads.iter_mut().flatten() {
        *d *= growth;
    }
    Ok(loads)
}

type ModeOutcome = Result<f64, &'static str>;

fn failed(context: &str, e: ScenarioError) -> &'static str {
    log::warn!("sweep cell {context} failed: {e}");
    status_of(&e)
}

/// Annual EV emissions of one (penetration, level) cell on the constrained
/// network and, if requested, the relaxed one. Both modes share the
/// constrained base dispatch of every day.
fn run_cell(
    case: Result<GridCase, ScenarioError>,
    curves: &[RepresentativeDay],
    demand: &EvDemand,
    spec: &ScenarioSpec,
    load_growth: f64,
    context: &str,
) -> (ModeOutcome, Option<ModeOutcome>) {
    let shared = || -> Result<_, ScenarioError> {
        let case = case?;
        let ptdf = NetworkPtdf::build(&case)?;
        let mut days = Vec::new();
        for (month, _) in spec.day_set.members() {
            let loads = month_loads(&case, curves, month, load_growth)?;
            let base = solve_model_one(&case, &loads, &ptdf)?;
            days.push((loads, base));
        }
        Ok((case, ptdf, days))
    };
    let (case, ptdf, days) = match shared() {
        Ok(v) => v,
        Err(e) => {
            let status = failed(context, e);
            return (Err(status), spec.include_relaxed.then_some(Err(status)));
        }
    };
    let annual = |network: &GridCase| -> ModeOutcome {
        let mut daily = Vec::with_capacity(days.len());
        for (loads, base) in &days {
            match solve_model_two(network, loads, base, demand, &ptdf) {
                Ok(ev) => daily.push(ev.e_ev_t),
                Err(e) => return Err(failed(context, e.into())),
            }
        }
        Ok(annualize_weighted(&daily, spec.day_set))
    };
    let tight = annual(&case);
    let loose = spec.include_relaxed.then(|| annual(&relax_network(&case)));
    (tight, loose)
}

/// Runs every (penetration, level) cell, on the constrained and (optionally)
/// relaxed network. Cells run in parallel; rows come back in
/// (penetration, level, mode) order. Failing cells are recorded, not fatal.
pub fn run_sweep(
    spec: &ScenarioSpec,
    case: &GridCase,
    curves: &[RepresentativeDay],
    fleet: &FleetAssumptions,
) -> Result<SweepTable, ScenarioError> {
    spec.validate()?;
    fleet.validate()?;
    let load_growth = project_growth(1.0, LOAD_GROWTH_RATE, spec.growth_years)?;
    let fuel_growth = project_growth(1.0, FUEL_GROWTH_RATE, spec.growth_years)?;
    let mut grown = case.clone();
    for c in &mut grown.counties {
        c.annual_gallons *= fuel_growth;
    }
    let slack_buses = NetworkPtdf::build(&grown)?.slack_buses();

    let cells: Vec<(f64, Option<f64>)> = spec
        .penetrations
        .iter()
        .flat_map(|&p| spec.renewable_levels.iter().map(move |&l| (p, l)))
        .collect();
    let rows: Vec<Vec<SweepRow>> = cells
        .par_iter()
        .map(|&(p, level)| {
            let a = fleet.with_penetration(p);
            let demands = county_demands(&grown.counties, &a, &BTreeMap::new());
            let e_icv = icv_emissions_annual(&demands, &a);
            let demand = ev_demand_map(&demands);
            let scaled = match level {
                None => Ok(grown.clone()),
                Some(t) => scale_to_level(&grown, t, spec.level_mode).map(|(c, _)| c),
            };
            let context = format!("(penetration {p}, level {level:?})");
            let (tight, loose) = run_cell(scaled, curves, &demand, spec, load_growth, &context);
            cell_rows(p, level, e_icv, tight, loose)
        })
        .collect();
    Ok(SweepTable {
        rows: rows.into_iter().flatten().collect(),
        slack_buses,
        day_set: spec.day_set,
        flags: vec![FLAG_NON_LEAP_WEIGHTS.to_string()],
    })
}

fn cell_rows(
    penetration: f64,
    level: Option<f64>,
    e_icv: f64,
    tight: ModeOutcome,
    loose: Option<ModeOutcome>,
) -> Vec<SweepRow> {
    let row = |mode, outcome: ModeOutcome, congestion| {
        let e_ev = outcome.ok();
        SweepRow {
            penetration,
            renewable_level: level,
            mode,
            e_ev_t: e_ev,
            e_icv_t: e_icv,
            e_v_t: e_ev.map(|e| e + e_icv),
            congestion_induced_t: congestion,
            status: outcome.err().unwrap_or("optimal").to_string(),
        }
    };
    let congestion = match (tight, loose) {
        (Ok(t), Some(Ok(r))) => Some(congestion_difference(t, r)),
        _ => None,
    };
    let mut out = vec![row(NetworkMode::Constrained, tight, congestion)];
    if let Some(r) = loose {
        out.push(row(NetworkMode::Relaxed, r, r.ok().map(|_| 0.0)));
    }
    out
}
