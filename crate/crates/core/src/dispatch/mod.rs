//! The three dispatch models: cost-minimizing base dispatch, emissions-
//! minimizing EV re-dispatch/charging, and minimum MW·mile line upgrades.
//!
//! All three share the same operating constraints per hour: a per-island
//! power balance with loss factor `(1−τ)` on generation, two flow rows per
//! capacity-limited line, capability bounds, and cyclic ramp rows.

mod base;
mod redispatch;
mod upgrade;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::grid::{GridCase, GridError};
use crate::lp::{LinearProgram, LpError, Relation, VarId};
use crate::ptdf::{NetworkPtdf, PtdfError};

pub use base::{build_model_one, solve_model_one, BaseDispatch};
pub use redispatch::{build_model_two, ev_emissions, solve_model_two, EvDispatch};
pub use upgrade::{
    solve_model_three, solve_model_three_per_day, upgrade_envelope, LineUpgrade, OperatingDay,
    UpgradePlan,
};

/// Per-county EV energy requirement per operating cycle, MWh, keyed by FIPS.
pub type EvDemand = BTreeMap<String, f64>;

/// Per-load, per-hour demand in MW (`loads[i][t]`).
pub type HourlyLoads = Vec<Vec<f64>>;

/// PTDF entries below this magnitude are left out of flow rows.
const PTDF_DROP: f64 = 1e-12;

/// Flag: Model III emission cap written without the `(1−τ)` factor.
pub const FLAG_EMISSION_CAP_NO_LOSS_FACTOR: &str = "emission_cap_without_loss_factor";
/// Flag: Model III balance row written with the `(1−τ)` factor.
pub const FLAG_UPGRADE_BALANCE_LOSS_FACTOR: &str = "upgrade_balance_with_loss_factor";
/// Flag: ramp rows wrap from the first hour to the last.
pub const FLAG_CYCLIC_RAMP: &str = "cyclic_ramp_wrap";

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("base case infeasible: load exceeds deliverable generation (phase-one residual {infeasibility:.6})")]
    InfeasibleBaseCase { infeasibility: f64 },
    #[error("EV demand cannot be delivered under line and generation limits (phase-one residual {infeasibility:.6})")]
    InfeasibleEvDemand { infeasibility: f64 },
    #[error("emission target {e_ev_max} t is not reachable with the upgradable lines")]
    InfeasibleTarget { e_ev_max: f64 },
    #[error("{model} LP reported unbounded")]
    Unbounded { model: &'static str },
    #[error("load profile shape: expected {loads} loads × {steps} hours")]
    LoadShape { loads: usize, steps: usize },
    #[error("base dispatch does not match the case ({0})")]
    BaseMismatch(String),
    #[error("upgrade needs at least one operating day")]
    NoDays,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Ptdf(#[from] PtdfError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// An EV charging station: one eligible bus serving one county.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChargingStation {
    pub county: String,
    pub bus_id: String,
    #[serde(skip)]
    pub bus: usize,
}

/// Stations for every county with positive demand, in case county order and
/// bus order within a county.
pub fn charging_stations(case: &GridCase, demand: &EvDemand) -> Result<Vec<ChargingStation>, DispatchError> {
    for fips in demand.keys() {
        if case.county(fips).is_none() {
            return Err(GridError::UnknownCounty(fips.clone()).into());
        }
    }
    let threshold = case.thresholds.charging_below_kv;
    let mut out = Vec::new();
    for county in &case.counties {
        let e_c = demand.get(&county.fips).copied().unwrap_or(0.0);
        if e_c <= 0.0 {
            continue;
        }
        let before = out.len();
        for (i, b) in case.buses.iter().enumerate() {
            if b.county == county.fips && b.voltage_kv < threshold {
                out.push(ChargingStation {
                    county: county.fips.clone(),
                    bus_id: b.id.clone(),
                    bus: i,
                });
            }
        }
        if out.len() == before {
            return Err(GridError::CountyHasNoEligibleBus {
                county: county.fips.clone(),
                threshold_kv: threshold,
            }
            .into());
        }
    }
    Ok(out)
}

/// Copy of `case` with every line capacity set to +∞, so no flow rows are
/// generated.
pub fn relax_network(case: &GridCase) -> GridCase {
    let mut relaxed = case.clone();
    for l in &mut relaxed.lines {
        l.capacity_mw = f64::INFINITY;
    }
    relaxed
}

/// Emissions in tonnes of a per-generator hourly schedule (t/GWh × MWh × 1e−3).
pub fn emissions_t(case: &GridCase, power: &[Vec<f64>]) -> f64 {
    let dt = case.time_grid.dt_h;
    case.generators
        .iter()
        .zip(power)
        .map(|(g, p)| g.emission_t_per_gwh * p.iter().sum::<f64>() * dt * 1e-3)
        .sum()
}

/// Generation cost in $ of a per-generator hourly schedule.
pub fn cost_total(case: &GridCase, power: &[Vec<f64>]) -> f64 {
    let dt = case.time_grid.dt_h;
    case.generators
        .iter()
        .zip(power)
        .map(|(g, p)| g.cost_per_mwh * p.iter().sum::<f64>() * dt)
        .sum()
}

/// Index bookkeeping shared by the model builders.
pub(crate) struct Network<'a> {
    pub case: &'a GridCase,
    pub ptdf: &'a NetworkPtdf,
    pub steps: usize,
    pub gen_bus: Vec<usize>,
    pub load_bus: Vec<usize>,
}

impl<'a> Network<'a> {
    pub fn new(case: &'a GridCase, ptdf: &'a NetworkPtdf, loads: &[Vec<f64>]) -> Result<Self, DispatchError> {
        let steps = case.time_grid.steps;
        if ptdf.num_buses() != case.buses.len() || ptdf.num_lines() != case.lines.len() {
            return Err(PtdfError::LengthMismatch {
                expected: case.buses.len(),
                got: ptdf.num_buses(),
            }
            .into());
        }
        if loads.len() != case.loads.len() || loads.iter().any(|d| d.len() != steps) {
            return Err(DispatchError::LoadShape {
                loads: case.loads.len(),
                steps,
            });
        }
        let index = case.bus_index();
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| DispatchError::from(GridError::UnknownBus(id.to_string())))
        };
        let gen_bus = case.generators.iter().map(|g| lookup(&g.bus)).collect::<Result<_, _>>()?;
        let load_bus = case.loads.iter().map(|d| lookup(&d.bus)).collect::<Result<_, _>>()?;
        Ok(Network {
            case,
            ptdf,
            steps,
            gen_bus,
            load_bus,
        })
    }

    pub fn num_islands(&self) -> usize {
        self.ptdf.matrices.len()
    }

    pub fn gen_island(&self, j: usize) -> usize {
        self.ptdf.island_of_bus(self.gen_bus[j])
    }

    pub fn load_island(&self, i: usize) -> usize {
        self.ptdf.island_of_bus(self.load_bus[i])
    }

    /// Total load per island at hour `t`.
    pub fn island_load(&self, loads: &[Vec<f64>], t: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.num_islands()];
        for (i, d) in loads.iter().enumerate() {
            out[self.load_island(i)] += d[t];
        }
        out
    }

    /// Hourly per-bus injections from generation, loads and station draws.
    pub fn injections(&self, gen: &[Vec<f64>], loads: &[Vec<f64>], stations: &[(usize, &[f64])], t: usize) -> Vec<f64> {
        let mut inj = vec![0.0; self.case.buses.len()];
        for (j, p) in gen.iter().enumerate() {
            inj[self.gen_bus[j]] += p[t];
        }
        for (i, d) in loads.iter().enumerate() {
            inj[self.load_bus[i]] -= d[t];
        }
        for &(b, draw) in stations {
            inj[b] -= draw[t];
        }
        inj
    }

    /// Flows `[line][t]` for the given schedule.
    pub fn flows(&self, gen: &[Vec<f64>], loads: &[Vec<f64>], stations: &[(usize, &[f64])]) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.steps]; self.case.lines.len()];
        for t in 0..self.steps {
            let f = self.ptdf.flows(&self.injections(gen, loads, stations, t));
            for (l, v) in f.into_iter().enumerate() {
                out[l][t] = v;
            }
        }
        out
    }

    /// Whether generator `j` can ever violate its ramp limits; rows are
    /// skipped otherwise.
    pub fn ramp_binding(&self, j: usize) -> bool {
        if self.steps < 2 {
            return false;
        }
        let g = &self.case.generators[j];
        let reach = (0..self.steps).map(|t| g.max_output(t)).fold(0.0, f64::max);
        g.ramp_up_mw_per_h < reach || g.ramp_down_mw_per_h < reach
    }

    /// Lines that carry flow rows (finite capacity).
    pub fn limited_lines(&self) -> impl Iterator<Item = usize> + '_ {
        self.case
            .lines
            .iter()
            .enumerate()
            .filter(|(_, l)| l.capacity_mw.is_finite())
            .map(|(i, _)| i)
    }
}

/// Decision variables of one operating day in Models II and III.
pub(crate) struct DayVars {
    /// `delta_p[j][t]`
    pub delta_p: Vec<Vec<VarId>>,
    /// `charging[k][t]`
    pub charging: Vec<Vec<VarId>>,
}

/// Adds the re-dispatch/charging variables and operating rows for one day.
///
/// `upgrade[l]` is the capacity increment variable of line `l`, if any.
/// Returns the day's variables; the cost of `delta_p` is the emission rate
/// when `emission_cost` is set and zero otherwise.
pub(crate) fn add_operating_day(
    lp: &mut LinearProgram,
    net: &Network,
    loads: &[Vec<f64>],
    base: &BaseDispatch,
    stations: &[ChargingStation],
    demand: &EvDemand,
    upgrade: &[Option<VarId>],
    emission_cost: bool,
    tag: &str,
) -> DayVars {
    let case = net.case;
    let steps = net.steps;
    let dt = case.time_grid.dt_h;
    let keep = 1.0 - case.loss_rate;

    let delta_p: Vec<Vec<VarId>> = case
        .generators
        .iter()
        .enumerate()
        .map(|(j, g)| {
            let cost = if emission_cost {
                g.emission_t_per_gwh * dt * 1e-3
            } else {
                0.0
            };
            (0..steps)
                .map(|t| {
                    let room = (g.max_output(t) - base.p_star[j][t]).max(0.0);
                    lp.add_var(format!("{tag}dp[{}][{t}]", g.id), 0.0, room, cost)
                })
                .collect()
        })
        .collect();
    let charging: Vec<Vec<VarId>> = stations
        .iter()
        .map(|s| {
            (0..steps)
                .map(|t| lp.add_var(format!("{tag}pv[{}@{}][{t}]", s.county, s.bus_id), 0.0, f64::INFINITY, 0.0))
                .collect()
        })
        .collect();

    // balance: (1−τ)ΣΔp − Σp_v = Σd − (1−τ)Σp*
    for t in 0..steps {
        let island_load = net.island_load(loads, t);
        let mut rows: Vec<(Vec<(VarId, f64)>, f64)> = island_load.iter().map(|&d| (Vec::new(), d)).collect();
        for (j, vars) in delta_p.iter().enumerate() {
            let k = net.gen_island(j);
            rows[k].0.push((vars[t], keep));
            rows[k].1 -= keep * base.p_star[j][t];
        }
        for (s, vars) in stations.iter().zip(&charging) {
            let k = net.ptdf.island_of_bus(s.bus);
            rows[k].0.push((vars[t], -1.0));
        }
        for (k, (coeffs, rhs)) in rows.into_iter().enumerate() {
            if coeffs.is_empty() && rhs.abs() <= 1e-9 {
                continue;
            }
            lp.add_row(format!("{tag}balance[{k}][{t}]"), coeffs, Relation::Eq, rhs);
        }
    }

    // flow limits around the base flow
    for l in net.limited_lines() {
        let cap = case.lines[l].capacity_mw;
        for t in 0..steps {
            let base_flow = base.flows[l][t];
            let mut coeffs = Vec::new();
            for (j, vars) in delta_p.iter().enumerate() {
                let f = net.ptdf.factor(l, net.gen_bus[j]);
                if f.abs() > PTDF_DROP {
                    coeffs.push((vars[t], f));
                }
            }
            for (s, vars) in stations.iter().zip(&charging) {
                let f = net.ptdf.factor(l, s.bus);
                if f.abs() > PTDF_DROP {
                    coeffs.push((vars[t], -f));
                }
            }
            let id = &case.lines[l].id;
            let mut upper = coeffs.clone();
            let mut lower = coeffs;
            if let Some(df) = upgrade[l] {
                upper.push((df, -1.0));
                lower.push((df, 1.0));
            }
            lp.add_row(format!("{tag}flow+[{id}][{t}]"), upper, Relation::Le, cap - base_flow);
            lp.add_row(format!("{tag}flow-[{id}][{t}]"), lower, Relation::Ge, -cap - base_flow);
        }
    }

    // ramp on p* + Δp, cyclic
    for (j, g) in case.generators.iter().enumerate() {
        if !net.ramp_binding(j) {
            continue;
        }
        for t in 0..steps {
            let prev = (t + steps - 1) % steps;
            let base_step = base.p_star[j][t] - base.p_star[j][prev];
            let coeffs = vec![(delta_p[j][t], 1.0), (delta_p[j][prev], -1.0)];
            lp.add_row(
                format!("{tag}ramp_up[{}][{t}]", g.id),
                coeffs.clone(),
                Relation::Le,
                g.ramp_up_mw_per_h - base_step,
            );
            lp.add_row(
                format!("{tag}ramp_down[{}][{t}]", g.id),
                coeffs,
                Relation::Ge,
                -g.ramp_down_mw_per_h - base_step,
            );
        }
    }

    // county energy requirement
    for county in &case.counties {
        let e_c = demand.get(&county.fips).copied().unwrap_or(0.0);
        if e_c <= 0.0 {
            continue;
        }
        let coeffs: Vec<(VarId, f64)> = stations
            .iter()
            .zip(&charging)
            .filter(|(s, _)| s.county == county.fips)
            .flat_map(|(_, vars)| vars.iter().map(move |&v| (v, dt)))
            .collect();
        lp.add_row(format!("{tag}energy[{}]", county.fips), coeffs, Relation::Eq, e_c);
    }

    DayVars { delta_p, charging }
}

/// Largest |Σ charging·Δt − E_c| over counties with stations or demand.
pub(crate) fn county_residual(case: &GridCase, stations: &[ChargingStation], charging: &[Vec<f64>], demand: &EvDemand) -> f64 {
    let dt = case.time_grid.dt_h;
    let mut delivered: BTreeMap<&str, f64> = BTreeMap::new();
    for (s, p) in stations.iter().zip(charging) {
        *delivered.entry(s.county.as_str()).or_default() += p.iter().sum::<f64>() * dt;
    }
    let mut worst = 0.0f64;
    for (fips, &e_c) in demand {
        let got = delivered.get(fips.as_str()).copied().unwrap_or(0.0);
        worst = worst.max((got - e_c).abs());
    }
    worst
}
