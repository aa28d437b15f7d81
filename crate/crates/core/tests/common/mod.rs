//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use evgrid::dispatch::EvDemand;
use evgrid::grid::{Bus, County, Fuel, GenerationUnit, GridCase, Line, LoadPoint, TimeGrid, VoltageThresholds};
use evgrid::lp::{solve_lp, LinearProgram, LpStatus, Relation, VarId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleOutcome {
    Optimal(f64),
    Infeasible,
    Unbounded,
}

struct HalfSpace {
    a: Vec<f64>,
    rel: Relation,
    b: f64,
}

fn halfspaces(lp: &LinearProgram, big: f64) -> Vec<HalfSpace> {
    let n = lp.num_vars();
    let mut out = Vec::new();
    for row in &lp.rows {
        let mut a = vec![0.0; n];
        for &(v, c) in &row.coeffs {
            a[v.0] += c;
        }
        out.push(HalfSpace {
            a,
            rel: row.relation,
            b: row.rhs,
        });
    }
    for (j, v) in lp.vars.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let lo = if v.lower.is_finite() { v.lower } else { -big };
        let up = if v.upper.is_finite() { v.upper } else { big };
        out.push(HalfSpace {
            a: e.clone(),
            rel: Relation::Ge,
            b: lo,
        });
        out.push(HalfSpace {
            a: e,
            rel: Relation::Le,
            b: up,
        });
    }
    out
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f != 0.0 {
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn feasible(hs: &[HalfSpace], x: &[f64]) -> bool {
    hs.iter().all(|h| {
        let act: f64 = h.a.iter().zip(x).map(|(a, x)| a * x).sum();
        let tol = 1e-9 * (1.0 + h.b.abs());
        match h.rel {
            Relation::Le => act <= h.b + tol,
            Relation::Ge => act >= h.b - tol,
            Relation::Eq => (act - h.b).abs() <= tol,
        }
    })
}

/// Best objective over all vertices of the polytope cut by a box of half-width `big`.
fn best_vertex(lp: &LinearProgram, big: f64) -> Option<f64> {
    let n = lp.num_vars();
    let hs = halfspaces(lp, big);
    let k = hs.len();
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let a: Vec<Vec<f64>> = idx.iter().map(|&i| hs[i].a.clone()).collect();
        let b: Vec<f64> = idx.iter().map(|&i| hs[i].b).collect();
        if let Some(x) = solve_square(a, b) {
            if feasible(&hs, &x) {
                let obj = lp.objective(&x);
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < k - n + i {
                idx[i] += 1;
                for j in i + 1..n {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Exhaustive vertex enumeration. Unboundedness shows up as an optimum that
/// keeps moving when the artificial box is doubled.
pub fn vertex_enumeration(lp: &LinearProgram) -> OracleOutcome {
    const BIG: f64 = 1e6;
    match best_vertex(lp, BIG) {
        None => OracleOutcome::Infeasible,
        Some(obj) => {
            let wider = best_vertex(lp, 2.0 * BIG).expect("wider box stays feasible");
            if (wider - obj).abs() > 1e-7 * (1.0 + obj.abs()) {
                OracleOutcome::Unbounded
            } else {
                OracleOutcome::Optimal(obj)
            }
        }
    }
}

/// Small random general-form LP with integer data (≤ 6 variables, ≤ 8 rows).
pub fn random_lp(rng: &mut ChaCha8Rng) -> LinearProgram {
    let n = rng.gen_range(1..=6);
    let m = rng.gen_range(1..=8);
    let mut lp = LinearProgram::new();
    for j in 0..n {
        let lower = match rng.gen_range(0..10) {
            0..=5 => 0.0,
            6..=7 => f64::NEG_INFINITY,
            _ => -(rng.gen_range(0..=5) as f64),
        };
        let upper = if rng.gen_bool(0.5) {
            f64::INFINITY
        } else if lower.is_finite() {
            lower + rng.gen_range(1..=10) as f64
        } else {
            rng.gen_range(-2..=8) as f64
        };
        let cost = rng.gen_range(-5..=5) as f64;
        lp.add_var(format!("x{j}"), lower, upper, cost);
    }
    for r in 0..m {
        let mut coeffs: Vec<(VarId, f64)> = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.7) {
                let a = rng.gen_range(-5..=5) as f64;
                if a != 0.0 {
                    coeffs.push((VarId(j), a));
                }
            }
        }
        let relation = match rng.gen_range(0..5) {
            0..=1 => Relation::Le,
            2..=3 => Relation::Ge,
            _ => Relation::Eq,
        };
        let rhs = rng.gen_range(-10..=10) as f64;
        lp.add_row(format!("r{r}"), coeffs, relation, rhs);
    }
    lp
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Solver status and objective against [`vertex_enumeration`] at relative
/// tolerance `1e-7`.
pub fn lp_agrees(lp: &LinearProgram) -> Result<(), String> {
    let sol = solve_lp(lp).map_err(|e| e.to_string())?;
    let oracle = vertex_enumeration(lp);
    match (sol.status, oracle) {
        (LpStatus::Optimal, OracleOutcome::Optimal(obj)) => {
            if !rel_close(sol.objective_value, obj, 1e-7) {
                return Err(format!("objective {} vs oracle {obj}", sol.objective_value));
            }
            if sol.max_primal_residual > 1e-6 {
                return Err(format!("residual {}", sol.max_primal_residual));
            }
            Ok(())
        }
        (LpStatus::Infeasible, OracleOutcome::Infeasible) => Ok(()),
        (LpStatus::Unbounded, OracleOutcome::Unbounded) => Ok(()),
        (s, o) => Err(format!("status {s} vs oracle {o:?}")),
    }
}

/// DC flows from a dense solve of the reduced `B θ = P` system, for a
/// single-island case. Flow on (f, t) is `(θ_f − θ_t) / x`.
pub fn direct_flows(case: &GridCase, injections: &[f64]) -> Vec<f64> {
    let n = case.buses.len();
    let slack = case
        .bus_position(&case.slack_buses[0])
        .expect("slack bus exists");
    let pos = |id: &str| case.bus_position(id).expect("line endpoint exists");
    let mut b = vec![vec![0.0; n]; n];
    for l in &case.lines {
        let (f, t, y) = (pos(&l.from_bus), pos(&l.to_bus), 1.0 / l.reactance_pu);
        b[f][f] += y;
        b[t][t] += y;
        b[f][t] -= y;
        b[t][f] -= y;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let reduced: Vec<Vec<f64>> = keep.iter().map(|&i| keep.iter().map(|&j| b[i][j]).collect()).collect();
    let rhs: Vec<f64> = keep.iter().map(|&i| injections[i]).collect();
    let mut theta = vec![0.0; n];
    if !keep.is_empty() {
        let x = solve_square(reduced, rhs).expect("connected network has a nonsingular reduced matrix");
        for (&i, v) in keep.iter().zip(x) {
            theta[i] = v;
        }
    }
    case.lines
        .iter()
        .map(|l| (theta[pos(&l.from_bus)] - theta[pos(&l.to_bus)]) / l.reactance_pu)
        .collect()
}

/// Random injections at every bus, shifted to sum to zero.
pub fn balanced_injections(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut p: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
    let mean = p.iter().sum::<f64>() / n as f64;
    for v in &mut p {
        *v -= mean;
    }
    p
}

fn bus(id: &str, kv: f64, county: &str) -> Bus {
    Bus {
        id: id.into(),
        name: format!("Bus {id}"),
        voltage_kv: kv,
        county: county.into(),
        region: "R".into(),
    }
}

pub fn unit(id: &str, bus: &str, fuel: Fuel, cap: f64, cost: f64, rate: f64, steps: usize) -> GenerationUnit {
    GenerationUnit {
        id: id.into(),
        bus: bus.into(),
        fuel,
        capacity_mw: cap,
        cost_per_mwh: cost,
        emission_t_per_gwh: rate,
        ramp_up_mw_per_h: cap,
        ramp_down_mw_per_h: cap,
        capability_profile: vec![1.0; steps],
    }
}

/// Bus 1 (345 kV, county A) and bus 2 (138 kV, county B) joined by line L1
/// with x = 0.5; slack at bus 2, no losses.
pub fn two_bus(cap: f64, steps: usize) -> GridCase {
    let county = |fips: &str| County {
        fips: fips.into(),
        state: "ST".into(),
        population: 1000,
        annual_gallons: 0.0,
    };
    GridCase {
        buses: vec![bus("1", 345.0, "A"), bus("2", 138.0, "B")],
        lines: vec![Line {
            id: "L1".into(),
            from_bus: "1".into(),
            to_bus: "2".into(),
            reactance_pu: 0.5,
            capacity_mw: cap,
            length_mi: 1.0,
            voltage_kv: 345.0,
        }],
        generators: vec![],
        loads: vec![],
        counties: vec![county("A"), county("B")],
        time_grid: TimeGrid::hours(steps),
        loss_rate: 0.0,
        slack_buses: vec!["2".into()],
        thresholds: VoltageThresholds::default(),
    }
}

/// One hour: $10 unit at bus 1, $50 unit at bus 2, 50 MW load at bus 2.
pub fn congestion_case(cap: f64) -> (GridCase, Vec<Vec<f64>>) {
    let mut case = two_bus(cap, 1);
    case.generators = vec![
        unit("A", "1", Fuel::Coal, 100.0, 10.0, 900.0, 1),
        unit("B", "2", Fuel::Gas, 100.0, 50.0, 400.0, 1),
    ];
    case.loads = vec![LoadPoint {
        id: "D".into(),
        bus: "2".into(),
        peak_mw: 50.0,
        region: "R".into(),
    }];
    (case, vec![vec![50.0]])
}

/// Two hours: 40 MW of wind at bus 1 available in hour 1 only, a
/// 500 t/GWh unit at bus 2, no base load.
pub fn wind_case(cap: f64) -> GridCase {
    let mut case = two_bus(cap, 2);
    let mut wind = unit("A", "1", Fuel::Wind, 40.0, 0.0, 0.0, 2);
    wind.capability_profile = vec![1.0, 0.0];
    case.generators = vec![wind, unit("B", "2", Fuel::Gas, 100.0, 30.0, 500.0, 2)];
    case
}

pub fn demand_b(e_c: f64) -> EvDemand {
    [("B".to_string(), e_c)].into_iter().collect()
}
