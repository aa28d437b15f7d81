use serde::Serialize;

use super::{cost_total, emissions_t, DispatchError, Network, PTDF_DROP};
use crate::grid::GridCase;
use crate::lp::{solve_lp, LinearProgram, LpStatus, Relation, VarId};
use crate::ptdf::NetworkPtdf;

/// Model I result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaseDispatch {
    /// `p_star[j][t]`, MW
    pub p_star: Vec<Vec<f64>>,
    /// $
    pub cost_total: f64,
    pub emissions_total_t: f64,
    /// `flows[l][t]`, MW, positive from `from_bus` to `to_bus`
    pub flows: Vec<Vec<f64>>,
    pub max_residual: f64,
    pub slack_buses: Vec<String>,
}

/// Model I: minimize Σ c_j p_j(t) Δt over per-island balance, line limits,
/// capability bounds and cyclic ramp rows. Returns the LP and `p[j][t]`.
pub(crate) fn model_one_lp(net: &Network, loads: &[Vec<f64>]) -> (LinearProgram, Vec<Vec<VarId>>) {
    let case = net.case;
    let steps = net.steps;
    let dt = case.time_grid.dt_h;
    let keep = 1.0 - case.loss_rate;
    let mut lp = LinearProgram::new();

    let p: Vec<Vec<VarId>> = case
        .generators
        .iter()
        .map(|g| {
            (0..steps)
                .map(|t| lp.add_var(format!("p[{}][{t}]", g.id), 0.0, g.max_output(t), g.cost_per_mwh * dt))
                .collect()
        })
        .collect();

    for t in 0..steps {
        let island_load = net.island_load(loads, t);
        let mut rows: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); net.num_islands()];
        for (j, vars) in p.iter().enumerate() {
            rows[net.gen_island(j)].push((vars[t], keep));
        }
        for (k, coeffs) in rows.into_iter().enumerate() {
            if coeffs.is_empty() && island_load[k] == 0.0 {
                continue;
            }
            lp.add_row(format!("balance[{k}][{t}]"), coeffs, Relation::Eq, island_load[k]);
        }
    }

    for l in net.limited_lines() {
        let line = &case.lines[l];
        let load_factors: Vec<f64> = net.load_bus.iter().map(|&b| net.ptdf.factor(l, b)).collect();
        for t in 0..steps {
            let load_flow: f64 = load_factors.iter().zip(loads).map(|(f, d)| f * d[t]).sum();
            let coeffs: Vec<(VarId, f64)> = p
                .iter()
                .enumerate()
                .map(|(j, vars)| (vars[t], net.ptdf.factor(l, net.gen_bus[j])))
                .filter(|&(_, f)| f.abs() > PTDF_DROP)
                .collect();
            lp.add_row(
                format!("flow+[{}][{t}]", line.id),
                coeffs.clone(),
                Relation::Le,
                line.capacity_mw + load_flow,
            );
            lp.add_row(
                format!("flow-[{}][{t}]", line.id),
                coeffs,
                Relation::Ge,
                -line.capacity_mw + load_flow,
            );
        }
    }

    for (j, g) in case.generators.iter().enumerate() {
        if !net.ramp_binding(j) {
            continue;
        }
        for t in 0..steps {
            let prev = (t + steps - 1) % steps;
            let coeffs = vec![(p[j][t], 1.0), (p[j][prev], -1.0)];
            lp.add_row(format!("ramp_up[{}][{t}]", g.id), coeffs.clone(), Relation::Le, g.ramp_up_mw_per_h);
            lp.add_row(format!("ramp_down[{}][{t}]", g.id), coeffs, Relation::Ge, -g.ramp_down_mw_per_h);
        }
    }
    (lp, p)
}

/// Builds the Model I LP for `loads[i][t]`.
pub fn build_model_one(case: &GridCase, loads: &[Vec<f64>], ptdf: &NetworkPtdf) -> Result<LinearProgram, DispatchError> {
    let net = Network::new(case, ptdf, loads)?;
    Ok(model_one_lp(&net, loads).0)
}

/// Solves Model I; flows are reconstructed from the factor tables.
pub fn solve_model_one(case: &GridCase, loads: &[Vec<f64>], ptdf: &NetworkPtdf) -> Result<BaseDispatch, DispatchError> {
    let net = Network::new(case, ptdf, loads)?;
    let (lp, p) = model_one_lp(&net, loads);
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(DispatchError::InfeasibleBaseCase {
                infeasibility: sol.infeasibility,
            })
        }
        LpStatus::Unbounded => return Err(DispatchError::Unbounded { model: "Model I" }),
    }
    let p_star: Vec<Vec<f64>> = p
        .iter()
        .map(|vars| vars.iter().map(|&v| sol.value(v)).collect())
        .collect();
    let flows = net.flows(&p_star, loads, &[]);
    Ok(BaseDispatch {
        cost_total: cost_total(case, &p_star),
        emissions_total_t: emissions_t(case, &p_star),
        flows,
        max_residual: sol.max_primal_residual,
        slack_buses: ptdf.slack_buses(),
        p_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::fixtures::model_one_case;
    use crate::dispatch::relax_network;
    use crate::grid::fixtures::*;
    use crate::grid::{Fuel, LoadPoint, TimeGrid};

    fn solve(case: &GridCase, loads: &[Vec<f64>]) -> Result<BaseDispatch, DispatchError> {
        let ptdf = NetworkPtdf::build(case).unwrap();
        solve_model_one(case, loads, &ptdf)
    }

    #[test]
    fn congested_two_bus_case() {
        let (case, loads) = model_one_case(30.0);
        let b = solve(&case, &loads).unwrap();
        assert!((b.p_star[0][0] - 30.0).abs() < 1e-6);
        assert!((b.p_star[1][0] - 20.0).abs() < 1e-6);
        assert!((b.cost_total - 1300.0).abs() < 1e-6);
        assert!((b.flows[0][0] - 30.0).abs() < 1e-6);
    }

    #[test]
    fn uncongested_two_bus_case() {
        let (case, loads) = model_one_case(100.0);
        let b = solve(&case, &loads).unwrap();
        assert!((b.p_star[0][0] - 50.0).abs() < 1e-6);
        assert!(b.p_star[1][0].abs() < 1e-6);
        assert!((b.cost_total - 500.0).abs() < 1e-6);
    }

    #[test]
    fn relaxation_never_costs_more() {
        let (case, loads) = model_one_case(30.0);
        let tight = solve(&case, &loads).unwrap();
        let loose = solve(&relax_network(&case), &loads).unwrap();
        assert!(loose.cost_total <= tight.cost_total + 1e-9);
    }

    #[test]
    fn load_above_capacity_is_infeasible() {
        let (case, _) = model_one_case(100.0);
        let err = solve(&case, &[vec![250.0]]).unwrap_err();
        assert!(matches!(err, DispatchError::InfeasibleBaseCase { .. }), "{err}");
    }

    #[test]
    fn counting_for_a_day() {
        let mut case = two_bus();
        case.time_grid = TimeGrid::daily();
        case.generators = vec![
            gen("A", "1", Fuel::Coal, 100.0, 10.0, 900.0, 24),
            gen("B", "2", Fuel::Gas, 100.0, 50.0, 400.0, 24),
        ];
        case.loads = vec![LoadPoint {
            id: "D".into(),
            bus: "2".into(),
            peak_mw: 50.0,
            region: "R".into(),
        }];
        let ptdf = NetworkPtdf::build(&case).unwrap();
        let lp = build_model_one(&case, &[vec![50.0; 24]], &ptdf).unwrap();
        assert_eq!(lp.num_vars(), 48);
        let count = |prefix: &str| lp.rows.iter().filter(|r| r.name.starts_with(prefix)).count();
        assert_eq!(count("balance"), 24);
        assert_eq!(count("flow"), 48);
        // ramp limits equal capacity, so they can never bind
        assert_eq!(count("ramp"), 0);
        assert!(build_model_one(&relax_network(&case), &[vec![50.0; 24]], &ptdf)
            .unwrap()
            .rows
            .iter()
            .all(|r| !r.name.starts_with("flow")));
    }

    #[test]
    fn single_unit_follows_flat_load() {
        let mut case = two_bus();
        case.time_grid = TimeGrid::daily();
        case.generators = vec![gen("A", "1", Fuel::Gas, 100.0, 10.0, 400.0, 24)];
        case.loads = vec![LoadPoint {
            id: "D".into(),
            bus: "2".into(),
            peak_mw: 50.0,
            region: "R".into(),
        }];
        case.lines[0].capacity_mw = 100.0;
        let b = solve(&case, &[vec![50.0; 24]]).unwrap();
        assert!(b.p_star[0].iter().all(|p| (p - 50.0).abs() < 1e-6));
    }

    #[test]
    fn losses_scale_generation() {
        let (mut case, loads) = model_one_case(100.0);
        case.loss_rate = 0.05911;
        let b = solve(&case, &loads).unwrap();
        let total: f64 = b.p_star.iter().map(|p| p[0]).sum();
        assert!((total * (1.0 - 0.05911) - 50.0).abs() < 1e-6);
    }

    #[test]
    fn ramp_limits_bind_cyclically() {
        // cheap unit at bus 1 with ramp 10 against a load that jumps 0 → 40
        let mut case = two_bus();
        case.time_grid = TimeGrid::hours(2);
        case.lines[0].capacity_mw = f64::INFINITY;
        let mut cheap = gen("A", "1", Fuel::Coal, 100.0, 10.0, 900.0, 2);
        cheap.ramp_up_mw_per_h = 10.0;
        cheap.ramp_down_mw_per_h = 10.0;
        case.generators = vec![cheap, gen("B", "2", Fuel::Gas, 100.0, 50.0, 400.0, 2)];
        case.loads = vec![LoadPoint {
            id: "D".into(),
            bus: "2".into(),
            peak_mw: 40.0,
            region: "R".into(),
        }];
        let b = solve(&case, &[vec![0.0, 40.0]]).unwrap();
        // A: 0 then 10 (ramp); B covers the remaining 30
        assert!((b.p_star[0][1] - b.p_star[0][0] - 10.0).abs() < 1e-6);
        assert!((b.p_star[0][0]).abs() < 1e-6);
        assert!((b.cost_total - (100.0 + 1500.0)).abs() < 1e-6);
    }
}
