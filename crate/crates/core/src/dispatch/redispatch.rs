use serde::Serialize;

use super::{
    add_operating_day, charging_stations, county_residual, emissions_t, BaseDispatch, ChargingStation,
    DispatchError, EvDemand, Network,
};
use crate::grid::GridCase;
use crate::lp::{solve_lp, LinearProgram, LpStatus};
use crate::ptdf::NetworkPtdf;

/// Model II result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvDispatch {
    /// `delta_p[j][t]` ≥ 0, MW
    pub delta_p: Vec<Vec<f64>>,
    /// `charging[k][t]` ≥ 0, MW, aligned with `stations`
    pub charging: Vec<Vec<f64>>,
    pub stations: Vec<ChargingStation>,
    /// `flows[l][t]` of the re-dispatched system, MW
    pub flows: Vec<Vec<f64>>,
    /// Emissions attributable to EV charging, t
    pub e_ev_t: f64,
    /// Total emissions of `p* + Δp`, t
    pub emissions_total_t: f64,
    /// Largest per-county |delivered − E_c|, MWh
    pub county_residual_mwh: f64,
    pub max_residual: f64,
}

fn check_base(case: &GridCase, base: &BaseDispatch) -> Result<(), DispatchError> {
    let steps = case.time_grid.steps;
    if base.p_star.len() != case.generators.len() || base.p_star.iter().any(|p| p.len() != steps) {
        return Err(DispatchError::BaseMismatch("generator schedule shape".into()));
    }
    if base.flows.len() != case.lines.len() || base.flows.iter().any(|f| f.len() != steps) {
        return Err(DispatchError::BaseMismatch("flow table shape".into()));
    }
    Ok(())
}

fn model_two_lp(
    net: &Network,
    loads: &[Vec<f64>],
    base: &BaseDispatch,
    stations: &[ChargingStation],
    demand: &EvDemand,
) -> (LinearProgram, super::DayVars) {
    let mut lp = LinearProgram::new();
    lp.objective_offset = emissions_t(net.case, &base.p_star);
    let no_upgrade = vec![None; net.case.lines.len()];
    let vars = add_operating_day(&mut lp, net, loads, base, stations, demand, &no_upgrade, true, "");
    (lp, vars)
}

/// Builds the Model II LP. The objective is total emissions of `p* + Δp` in
/// tonnes, with the base emissions carried as a constant offset.
pub fn build_model_two(
    case: &GridCase,
    loads: &[Vec<f64>],
    base: &BaseDispatch,
    demand: &EvDemand,
    ptdf: &NetworkPtdf,
) -> Result<LinearProgram, DispatchError> {
    let net = Network::new(case, ptdf, loads)?;
    check_base(case, base)?;
    let stations = charging_stations(case, demand)?;
    Ok(model_two_lp(&net, loads, base, &stations, demand).0)
}

/// Solves Model II on `case` around the base dispatch `base`.
///
/// `case` may be a relaxed copy of the case `base` was solved on; the base
/// schedule is kept fixed either way.
pub fn solve_model_two(
    case: &GridCase,
    loads: &[Vec<f64>],
    base: &BaseDispatch,
    demand: &EvDemand,
    ptdf: &NetworkPtdf,
) -> Result<EvDispatch, DispatchError> {
    let net = Network::new(case, ptdf, loads)?;
    check_base(case, base)?;
    let stations = charging_stations(case, demand)?;
    let (lp, vars) = model_two_lp(&net, loads, base, &stations, demand);
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(DispatchError::InfeasibleEvDemand {
                infeasibility: sol.infeasibility,
            })
        }
        LpStatus::Unbounded => return Err(DispatchError::Unbounded { model: "Model II" }),
    }
    let read = |vs: &Vec<Vec<crate::lp::VarId>>| -> Vec<Vec<f64>> {
        vs.iter().map(|r| r.iter().map(|&v| sol.value(v)).collect()).collect()
    };
    let delta_p = read(&vars.delta_p);
    let charging = read(&vars.charging);
    let total: Vec<Vec<f64>> = base
        .p_star
        .iter()
        .zip(&delta_p)
        .map(|(p, d)| p.iter().zip(d).map(|(a, b)| a + b).collect())
        .collect();
    let draws: Vec<(usize, &[f64])> = stations.iter().zip(&charging).map(|(s, c)| (s.bus, c.as_slice())).collect();
    let flows = net.flows(&total, loads, &draws);
    Ok(EvDispatch {
        e_ev_t: ev_emissions(case, base, &delta_p),
        emissions_total_t: emissions_t(case, &total),
        county_residual_mwh: county_residual(case, &stations, &charging, demand),
        max_residual: sol.max_primal_residual,
        delta_p,
        charging,
        stations,
        flows,
    })
}

/// EV-attributable emissions: emissions of `p* + Δp` minus those of `p*`,
/// which for linear rates is Σ ρ_j Δp_j(t) Δt.
pub fn ev_emissions(case: &GridCase, base: &BaseDispatch, delta_p: &[Vec<f64>]) -> f64 {
    // the difference form loses digits when base emissions dwarf the delta
    debug_assert_eq!(base.p_star.len(), delta_p.len());
    emissions_t(case, delta_p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::fixtures::*;
    use crate::dispatch::{relax_network, solve_model_one};
    use crate::grid::fixtures::*;
    use crate::grid::{Fuel, TimeGrid};

    fn run(case: &GridCase, e_c: f64) -> Result<(BaseDispatch, EvDispatch), DispatchError> {
        let ptdf = NetworkPtdf::build(case).unwrap();
        let loads: Vec<Vec<f64>> = vec![];
        let base = solve_model_one(case, &loads, &ptdf)?;
        let ev = solve_model_two(case, &loads, &base, &demand_b(e_c), &ptdf)?;
        Ok((base, ev))
    }

    #[test]
    fn wide_line_charges_from_wind() {
        let (_, ev) = run(&wind_case(30.0), 20.0).unwrap();
        assert!(ev.e_ev_t.abs() < 1e-6);
        assert!((ev.charging[0][0] - 20.0).abs() < 1e-6);
        assert!(ev.county_residual_mwh < 1e-6);
    }

    #[test]
    fn narrow_line_forces_gas() {
        let (_, ev) = run(&wind_case(10.0), 20.0).unwrap();
        assert!((ev.e_ev_t - 5.0).abs() < 1e-6);
        assert!((ev.delta_p[1].iter().sum::<f64>() - 10.0).abs() < 1e-6);
        assert!(ev.county_residual_mwh < 1e-6);
    }

    #[test]
    fn undeliverable_demand_is_infeasible() {
        let err = run(&wind_case(10.0), 300.0).unwrap_err();
        assert!(matches!(err, DispatchError::InfeasibleEvDemand { .. }), "{err}");
    }

    #[test]
    fn zero_demand_reduces_to_accounting() {
        let (mut case, loads) = model_one_case(30.0);
        case.counties[1].annual_gallons = 0.0;
        let ptdf = NetworkPtdf::build(&case).unwrap();
        let base = solve_model_one(&case, &loads, &ptdf).unwrap();
        let lp = build_model_two(&case, &loads, &base, &EvDemand::new(), &ptdf).unwrap();
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.objective_value - base.emissions_total_t).abs() < 1e-9);
        let ev = solve_model_two(&case, &loads, &base, &EvDemand::new(), &ptdf).unwrap();
        assert!(ev.delta_p.iter().flatten().all(|d| d.abs() < 1e-9));
        assert_eq!(ev.e_ev_t, 0.0);
    }

    #[test]
    fn one_county_two_stations_over_a_day() {
        let mut case = two_bus();
        case.time_grid = TimeGrid::daily();
        case.buses.push(bus("3", 69.0, "B"));
        case.lines.push(line("L2", "2", "3", 0.2, 50.0));
        case.generators = vec![gen("G", "2", Fuel::Gas, 100.0, 20.0, 400.0, 24)];
        let ptdf = NetworkPtdf::build(&case).unwrap();
        let base = solve_model_one(&case, &[], &ptdf).unwrap();
        let lp = build_model_two(&case, &[], &base, &demand_b(20.0), &ptdf).unwrap();
        let energy: Vec<_> = lp.rows.iter().filter(|r| r.name.starts_with("energy")).collect();
        assert_eq!(energy.len(), 1);
        assert_eq!(energy[0].coeffs.len(), 48);
    }

    #[test]
    fn clean_unit_is_preferred_over_cheap_dirty_one() {
        let mut case = two_bus();
        case.lines[0].capacity_mw = 100.0;
        case.generators = vec![
            gen("dirty", "1", Fuel::Coal, 100.0, 1.0, 1000.0, 1),
            gen("clean", "1", Fuel::Nuclear, 100.0, 90.0, 0.0, 1),
        ];
        let (_, ev) = run(&case, 30.0).unwrap();
        assert!(ev.e_ev_t.abs() < 1e-9);
        assert!((ev.delta_p[1][0] - 30.0).abs() < 1e-6);
    }

    #[test]
    fn relaxing_the_line_recovers_wind() {
        let case = wind_case(10.0);
        let ptdf = NetworkPtdf::build(&case).unwrap();
        let base = solve_model_one(&case, &[], &ptdf).unwrap();
        let relaxed = relax_network(&case);
        let ev = solve_model_two(&relaxed, &[], &base, &demand_b(20.0), &ptdf).unwrap();
        assert!(ev.e_ev_t.abs() < 1e-6);
    }

    #[test]
    fn linear_rates_make_both_accountings_agree() {
        let case = wind_case(10.0);
        let ptdf = NetworkPtdf::build(&case).unwrap();
        let base = solve_model_one(&case, &[], &ptdf).unwrap();
        let lp = build_model_two(&case, &[], &base, &demand_b(20.0), &ptdf).unwrap();
        let sol = solve_lp(&lp).unwrap();
        let ev = solve_model_two(&case, &[], &base, &demand_b(20.0), &ptdf).unwrap();
        let from_objective = sol.objective_value - base.emissions_total_t;
        assert!((from_objective - ev.e_ev_t).abs() <= 1e-7 * ev.e_ev_t.abs().max(1.0));
    }

    #[test]
    fn ev_emissions_of_no_change_is_zero() {
        let case = wind_case(10.0);
        let base = BaseDispatch {
            p_star: vec![vec![0.0; 2]; 2],
            cost_total: 0.0,
            emissions_total_t: 0.0,
            flows: vec![vec![0.0; 2]],
            max_residual: 0.0,
            slack_buses: vec![],
        };
        assert_eq!(ev_emissions(&case, &base, &[vec![0.0; 2], vec![0.0; 2]]), 0.0);
        assert!((ev_emissions(&case, &base, &[vec![0.0; 2], vec![4.0, 6.0]]) - 5.0).abs() < 1e-12);
    }
}
