use rayon::prelude::*;
use serde::Serialize;

use super::{
    add_operating_day, charging_stations, BaseDispatch, DispatchError, EvDemand, Network,
    FLAG_EMISSION_CAP_NO_LOSS_FACTOR, FLAG_UPGRADE_BALANCE_LOSS_FACTOR,
};
use crate::grid::GridCase;
use crate::lp::{solve_lp, LinearProgram, LpStatus, Relation, VarId};
use crate::ptdf::NetworkPtdf;

/// ΔF below this is reported as "not upgraded".
const BINDING_MW: f64 = 1e-9;

/// One representative day: its loads and the Model I dispatch for them.
#[derive(Debug, Clone)]
pub struct OperatingDay {
    pub label: String,
    pub loads: Vec<Vec<f64>>,
    pub base: BaseDispatch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineUpgrade {
    pub line_id: String,
    pub delta_f_mw: f64,
    pub length_mi: f64,
}

impl LineUpgrade {
    pub fn mw_mile(&self) -> f64 {
        self.delta_f_mw * self.length_mi
    }
}

/// Model III result. `lines` covers every line of the case in case order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpgradePlan {
    pub lines: Vec<LineUpgrade>,
    /// Σ ΔF_l · m_l, MW·mi
    pub objective_mw_mile: f64,
    pub e_ev_max: f64,
    /// EV emissions reached on each day, t
    pub achieved_e_ev_t: Vec<f64>,
    pub day_labels: Vec<String>,
    pub binding_lines: Vec<String>,
    pub flags: Vec<String>,
}

impl UpgradePlan {
    pub fn delta_f(&self) -> Vec<f64> {
        self.lines.iter().map(|l| l.delta_f_mw).collect()
    }

    /// Copy of `case` with every line capacity raised by its ΔF.
    pub fn apply(&self, case: &GridCase) -> GridCase {
        let mut out = case.clone();
        for (l, u) in out.lines.iter_mut().zip(&self.lines) {
            l.capacity_mw += u.delta_f_mw;
        }
        out
    }

    fn finish(lines: Vec<LineUpgrade>, e_ev_max: f64, achieved: Vec<f64>, labels: Vec<String>) -> Self {
        let objective_mw_mile = lines.iter().map(LineUpgrade::mw_mile).sum();
        let binding_lines = lines
            .iter()
            .filter(|l| l.delta_f_mw > BINDING_MW)
            .map(|l| l.line_id.clone())
            .collect();
        UpgradePlan {
            lines,
            objective_mw_mile,
            e_ev_max,
            achieved_e_ev_t: achieved,
            day_labels: labels,
            binding_lines,
            flags: vec![
                FLAG_EMISSION_CAP_NO_LOSS_FACTOR.to_string(),
                FLAG_UPGRADE_BALANCE_LOSS_FACTOR.to_string(),
            ],
        }
    }
}

/// Model III solved jointly over `days`: the ΔF variables are shared, every
/// day gets its own re-dispatch/charging variables and its own emission cap
/// `Σ ρ Δp Δt ≤ e_ev_max`. Only lines above the upgrade voltage threshold
/// with finite capacity receive a ΔF variable.
pub fn solve_model_three(
    case: &GridCase,
    days: &[OperatingDay],
    demand: &EvDemand,
    e_ev_max: f64,
    ptdf: &NetworkPtdf,
) -> Result<UpgradePlan, DispatchError> {
    if days.is_empty() {
        return Err(DispatchError::NoDays);
    }
    let stations = charging_stations(case, demand)?;
    let dt = case.time_grid.dt_h;
    let mut lp = LinearProgram::new();
    let upgrade: Vec<Option<VarId>> = case
        .lines
        .iter()
        .map(|l| {
            (l.capacity_mw.is_finite() && case.is_upgradable(l))
                .then(|| lp.add_var(format!("dF[{}]", l.id), 0.0, f64::INFINITY, l.length_mi))
        })
        .collect();

    let mut day_vars = Vec::with_capacity(days.len());
    for (k, day) in days.iter().enumerate() {
        let net = Network::new(case, ptdf, &day.loads)?;
        if day.base.p_star.len() != case.generators.len() || day.base.flows.len() != case.lines.len() {
            return Err(DispatchError::BaseMismatch(format!("day {}", day.label)));
        }
        let tag = format!("d{k}:");
        let vars = add_operating_day(&mut lp, &net, &day.loads, &day.base, &stations, demand, &upgrade, false, &tag);
        let cap: Vec<(VarId, f64)> = case
            .generators
            .iter()
            .zip(&vars.delta_p)
            .filter(|(g, _)| g.emission_t_per_gwh != 0.0)
            .flat_map(|(g, vs)| vs.iter().map(move |&v| (v, g.emission_t_per_gwh * dt * 1e-3)))
            .collect();
        lp.add_row(format!("{tag}emission_cap"), cap, Relation::Le, e_ev_max);
        day_vars.push(vars);
    }

    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(DispatchError::InfeasibleTarget { e_ev_max }),
        LpStatus::Unbounded => return Err(DispatchError::Unbounded { model: "Model III" }),
    }

    let lines = case
        .lines
        .iter()
        .zip(&upgrade)
        .map(|(l, v)| LineUpgrade {
            line_id: l.id.clone(),
            delta_f_mw: v.map_or(0.0, |v| sol.value(v).max(0.0)),
            length_mi: l.length_mi,
        })
        .collect();
    let achieved = day_vars
        .iter()
        .map(|vars| {
            case.generators
                .iter()
                .zip(&vars.delta_p)
                .map(|(g, vs)| g.emission_t_per_gwh * vs.iter().map(|&v| sol.value(v)).sum::<f64>() * dt * 1e-3)
                .sum()
        })
        .collect();
    let labels = days.iter().map(|d| d.label.clone()).collect();
    Ok(UpgradePlan::finish(lines, e_ev_max, achieved, labels))
}

/// Solves Model III separately for each day (in parallel) and combines the
/// plans with [`upgrade_envelope`].
pub fn solve_model_three_per_day(
    case: &GridCase,
    days: &[OperatingDay],
    demand: &EvDemand,
    e_ev_max: f64,
    ptdf: &NetworkPtdf,
) -> Result<UpgradePlan, DispatchError> {
    let plans: Vec<UpgradePlan> = days
        .par_iter()
        .map(|d| solve_model_three(case, std::slice::from_ref(d), demand, e_ev_max, ptdf))
        .collect::<Result<_, _>>()?;
    upgrade_envelope(&plans)
}

/// Per-line maximum of ΔF over `plans`, with the objective recomputed.
pub fn upgrade_envelope(plans: &[UpgradePlan]) -> Result<UpgradePlan, DispatchError> {
    let first = plans.first().ok_or(DispatchError::NoDays)?;
    let mut lines = first.lines.clone();
    let mut achieved = Vec::new();
    let mut labels = Vec::new();
    for plan in plans {
        let same = plan.lines.len() == lines.len()
            && plan.lines.iter().zip(&lines).all(|(a, b)| a.line_id == b.line_id);
        if !same {
            return Err(DispatchError::BaseMismatch("plans cover different line sets".into()));
        }
        for (acc, l) in lines.iter_mut().zip(&plan.lines) {
            acc.delta_f_mw = acc.delta_f_mw.max(l.delta_f_mw);
        }
        achieved.extend_from_slice(&plan.achieved_e_ev_t);
        labels.extend(plan.day_labels.iter().cloned());
    }
    Ok(UpgradePlan::finish(lines, first.e_ev_max, achieved, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::fixtures::*;
    use crate::dispatch::{solve_model_one, solve_model_two};

    fn day(case: &GridCase, ptdf: &NetworkPtdf) -> OperatingDay {
        OperatingDay {
            label: "d".into(),
            loads: vec![],
            base: solve_model_one(case, &[], ptdf).unwrap(),
        }
    }

    fn plan(df: &[f64]) -> UpgradePlan {
        let lines = df
            .iter()
            .enumerate()
            .map(|(i, &d)| LineUpgrade {
                line_id: format!("L{i}"),
                delta_f_mw: d,
                length_mi: 2.0,
            })
            .collect();
        UpgradePlan::finish(lines, 0.0, vec![0.0], vec!["x".into()])
    }

    #[test]
    fn zero_cap_needs_ten_mw() {
        let case = wind_case(10.0);
        let ptdf = NetworkPtdf::build(&case).unwrap();
        let p = solve_model_three(&case, &[day(&case, &ptdf)], &demand_b(20.0), 0.0, &ptdf).unwrap();
        assert!((p.lines[0].delta_f_mw - 10.0).abs() < 1e-6);
        assert!((p.objective_mw_mile - 10.0).abs() < 1e-6);
        assert_eq!(p.binding_lines, vec!["L1".to_string()]);

        let upgraded = p.apply(&case);
        let base = solve_model_one(&upgraded, &[], &ptdf).unwrap();
        let ev = solve_model_two(&upgraded, &[], &base, &demand_b(20.0), &ptdf).unwrap();
        assert!(ev.e_ev_t <= 1e-6);
    }

    #[test]
    fn reachable_cap_needs_nothing() {
        let case = wind_case(10.0);
        let ptdf = NetworkPtdf::build(&case).unwrap();
        let p = solve_model_three(&case, &[day(&case, &ptdf)], &demand_b(20.0), 5.0, &ptdf).unwrap();
        assert!(p.delta_f().iter().all(|&d| d.abs() < 1e-9));
        assert!(p.objective_mw_mile.abs() < 1e-9);
        assert!(p.binding_lines.is_empty());
    }

    #[test]
    fn low_voltage_line_cannot_be_upgraded() {
        let mut case = wind_case(10.0);
        case.lines[0].voltage_kv = 138.0;
        let ptdf = NetworkPtdf::build(&case).unwrap();
        let err = solve_model_three(&case, &[day(&case, &ptdf)], &demand_b(20.0), 0.0, &ptdf).unwrap_err();
        assert!(matches!(err, DispatchError::InfeasibleTarget { .. }), "{err}");
    }

    #[test]
    fn threshold_itself_is_not_upgradable() {
        let mut case = wind_case(10.0);
        case.lines[0].voltage_kv = 200.0;
        let ptdf = NetworkPtdf::build(&case).unwrap();
        assert!(solve_model_three(&case, &[day(&case, &ptdf)], &demand_b(20.0), 0.0, &ptdf).is_err());
    }

    #[test]
    fn joint_and_per_day_modes_agree_on_identical_days() {
        let case = wind_case(10.0);
        let ptdf = NetworkPtdf::build(&case).unwrap();
        let days = vec![day(&case, &ptdf), day(&case, &ptdf)];
        let joint = solve_model_three(&case, &days, &demand_b(20.0), 1.0, &ptdf).unwrap();
        let env = solve_model_three_per_day(&case, &days, &demand_b(20.0), 1.0, &ptdf).unwrap();
        // 1 t allows 2 MWh from gas, so 8 MW more line capacity
        assert!((joint.objective_mw_mile - 8.0).abs() < 1e-6);
        assert!((env.objective_mw_mile - joint.objective_mw_mile).abs() < 1e-6);
        assert_eq!(env.achieved_e_ev_t.len(), 2);
    }

    #[test]
    fn envelope_is_elementwise_max() {
        let env = upgrade_envelope(&[plan(&[10.0, 0.0]), plan(&[4.0, 7.0])]).unwrap();
        assert_eq!(env.delta_f(), vec![10.0, 7.0]);
        assert_eq!(env.objective_mw_mile, 34.0);
        let single = upgrade_envelope(&[plan(&[3.0, 1.0])]).unwrap();
        assert_eq!(single, plan(&[3.0, 1.0]));
        let zero = upgrade_envelope(&[plan(&[0.0, 0.0]), plan(&[0.0, 0.0])]).unwrap();
        assert_eq!(zero.objective_mw_mile, 0.0);
        assert!(upgrade_envelope(&[]).is_err());
    }
}
