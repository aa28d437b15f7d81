mod common;

use std::collections::BTreeMap;

use common::{congestion_case, demand_b, wind_case};
use evgrid::dispatch::{
    relax_network, solve_model_one, solve_model_three, solve_model_two, DispatchError, OperatingDay,
};
use evgrid::fleet::{county_demands, ev_demand_map, FleetAssumptions};
use evgrid::io::{synth_case, Template};
use evgrid::ptdf::NetworkPtdf;
use evgrid::scenario::month_loads;
use proptest::prelude::*;

fn e_ev(cap: f64, e_c: f64) -> f64 {
    let case = wind_case(cap);
    let ptdf = NetworkPtdf::build(&case).unwrap();
    let base = solve_model_one(&case, &[], &ptdf).unwrap();
    solve_model_two(&case, &[], &base, &demand_b(e_c), &ptdf).unwrap().e_ev_t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ev_emissions_fall_as_the_line_grows(f in 1.0f64..60.0, extra in 0.0f64..30.0, e_c in 0.0f64..60.0) {
        prop_assert!(e_ev(f + extra, e_c) <= e_ev(f, e_c) + 1e-7);
    }

    #[test]
    fn wind_case_matches_closed_form(f in 0.5f64..60.0, e_c in 0.0f64..80.0) {
        // wind reaches the county only in hour 1, through the line
        let clean = f.min(40.0).min(e_c);
        let want = (e_c - clean) * 500.0 * 1e-3;
        prop_assert!((e_ev(f, e_c) - want).abs() < 1e-7);
    }

    #[test]
    fn base_cost_falls_as_the_line_grows(f in 1.0f64..60.0, extra in 0.0f64..30.0) {
        let cost = |cap: f64| {
            let (case, loads) = congestion_case(cap);
            let ptdf = NetworkPtdf::build(&case).unwrap();
            solve_model_one(&case, &loads, &ptdf).unwrap().cost_total
        };
        prop_assert!(cost(f + extra) <= cost(f) + 1e-7);
    }
}

struct TwoArea {
    case: evgrid::grid::GridCase,
    curves: Vec<evgrid::scenario::RepresentativeDay>,
}

fn two_area() -> TwoArea {
    let b = synth_case(Template::TwoArea { a: 2, b: 2 }, 1);
    TwoArea {
        case: b.case,
        curves: b.curves,
    }
}

fn demand(case: &evgrid::grid::GridCase, penetration: f64) -> evgrid::dispatch::EvDemand {
    let a = FleetAssumptions::default().with_penetration(penetration);
    ev_demand_map(&county_demands(&case.counties, &a, &BTreeMap::new()))
}

#[test]
fn relaxed_network_never_emits_more() {
    let t = two_area();
    let ptdf = NetworkPtdf::build(&t.case).unwrap();
    for month in [1, 4, 7, 10] {
        let loads = month_loads(&t.case, &t.curves, month, 1.0).unwrap();
        let base = solve_model_one(&t.case, &loads, &ptdf).unwrap();
        let relaxed_base = solve_model_one(&relax_network(&t.case), &loads, &ptdf).unwrap();
        assert!(relaxed_base.cost_total <= base.cost_total + 1e-6);
        for p in [0.25, 0.5, 1.0] {
            let d = demand(&t.case, p);
            let tight = solve_model_two(&t.case, &loads, &base, &d, &ptdf).unwrap();
            let loose = solve_model_two(&relax_network(&t.case), &loads, &base, &d, &ptdf).unwrap();
            assert!(loose.e_ev_t <= tight.e_ev_t + 1e-6, "month {month} p {p}");
        }
    }
}

#[test]
fn county_energy_is_delivered_exactly() {
    let t = two_area();
    let ptdf = NetworkPtdf::build(&t.case).unwrap();
    let loads = month_loads(&t.case, &t.curves, 4, 1.0).unwrap();
    let base = solve_model_one(&t.case, &loads, &ptdf).unwrap();
    let d = demand(&t.case, 0.5);
    let ev = solve_model_two(&t.case, &loads, &base, &d, &ptdf).unwrap();
    for (county, e_c) in &d {
        let delivered: f64 = ev
            .stations
            .iter()
            .zip(&ev.charging)
            .filter(|(s, _)| &s.county == county)
            .flat_map(|(_, c)| c.iter())
            .sum();
        assert!((delivered - e_c).abs() <= 1e-6, "{county}: {delivered} vs {e_c}");
    }
    for (l, flows) in t.case.lines.iter().zip(&ev.flows) {
        assert!(flows.iter().all(|f| f.abs() <= l.capacity_mw + 1e-6), "line {}", l.id);
    }
}

#[test]
fn upgrade_plan_meets_its_cap_when_re_dispatched() {
    let t = two_area();
    let ptdf = NetworkPtdf::build(&t.case).unwrap();
    let d = demand(&t.case, 0.5);
    let days: Vec<OperatingDay> = [4, 7]
        .iter()
        .map(|&m| {
            let loads = month_loads(&t.case, &t.curves, m, 1.0).unwrap();
            let base = solve_model_one(&t.case, &loads, &ptdf).unwrap();
            OperatingDay {
                label: format!("month {m}"),
                loads,
                base,
            }
        })
        .collect();
    let cap = 150.0;
    let plan = solve_model_three(&t.case, &days, &d, cap, &ptdf).unwrap();
    assert!(plan.objective_mw_mile > 0.0, "the cap should force an upgrade");
    let upgraded = plan.apply(&t.case);
    for day in &days {
        // same base dispatch, wider lines
        let ev = solve_model_two(&upgraded, &day.loads, &day.base, &d, &ptdf).unwrap();
        assert!(ev.e_ev_t <= cap + 1e-6, "{}: {}", day.label, ev.e_ev_t);
    }
    // no upgrade at all leaves at least one day above the cap
    let worst = days
        .iter()
        .map(|day| solve_model_two(&t.case, &day.loads, &day.base, &d, &ptdf).unwrap().e_ev_t)
        .fold(0.0, f64::max);
    assert!(worst > cap);
}

#[test]
fn unreachable_cap_is_reported() {
    let t = two_area();
    let ptdf = NetworkPtdf::build(&t.case).unwrap();
    let loads = month_loads(&t.case, &t.curves, 7, 1.0).unwrap();
    let base = solve_model_one(&t.case, &loads, &ptdf).unwrap();
    let day = OperatingDay {
        label: "july".into(),
        loads,
        base,
    };
    let err = solve_model_three(&t.case, &[day], &demand(&t.case, 1.0), 0.0, &ptdf).unwrap_err();
    assert!(matches!(err, DispatchError::InfeasibleTarget { .. }), "{err}");
}
