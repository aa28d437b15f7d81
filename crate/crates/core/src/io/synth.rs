//! Seeded synthetic bundles for tests and demos.
//!
//! Every bus hosts one dispatchable unit sized to cover its own load, so
//! Model I is feasible whatever the line limits. Buses are 138 kV or
//! 345 kV; a line takes the lower voltage of its ends, and only 138 kV
//! buses belong to counties. The last bus is the slack.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Bundle, RunConfig};
use crate::fleet::apply_state_fuel;
use crate::grid::{
    Bus, County, Fuel, GenerationUnit, GridCase, Line, LoadPoint, TimeGrid, VoltageThresholds, DEFAULT_LOSS_RATE,
    HOURS_PER_DAY,
};
use crate::scenario::RepresentativeDay;

const LOW_KV: f64 = 138.0;
const HIGH_KV: f64 = 345.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    /// Lines (k, k+1) and (1, n), all with unit reactance.
    Ring { buses: usize },
    /// Bus 1 linked to every other bus.
    Star { buses: usize },
    /// Two chains joined by one 345 kV tie-line between their inner ends.
    /// Area A is wind-heavy; area B holds most load and the EV demand.
    TwoArea { a: usize, b: usize },
    /// Random spanning tree plus about n/2 extra lines, random reactances.
    Mesh { buses: usize },
}

impl Template {
    /// Parses a template name; `two-area` splits `buses` into halves.
    pub fn from_name(name: &str, buses: usize) -> Option<Self> {
        match name {
            "ring" => Some(Template::Ring { buses }),
            "star" => Some(Template::Star { buses }),
            "two-area" => Some(Template::TwoArea {
                a: buses / 2,
                b: buses - buses / 2,
            }),
            "mesh" => Some(Template::Mesh { buses }),
            _ => None,
        }
    }

    fn buses(self) -> usize {
        match self {
            Template::Ring { buses } | Template::Star { buses } | Template::Mesh { buses } => buses,
            Template::TwoArea { a, b } => a + b,
        }
    }
}

/// Emission rate used by synthetic cases, t/GWh.
pub fn default_rate(fuel: Fuel) -> f64 {
    match fuel {
        Fuel::Coal => 1000.0,
        Fuel::Gas => 450.0,
        Fuel::Other => 700.0,
        Fuel::Nuclear | Fuel::Hydro | Fuel::Solar | Fuel::Wind => 0.0,
    }
}

/// Marginal cost used by synthetic cases, $/MWh.
pub fn default_cost(fuel: Fuel) -> f64 {
    match fuel {
        Fuel::Coal => 25.0,
        Fuel::Gas => 40.0,
        Fuel::Nuclear => 12.0,
        Fuel::Other => 60.0,
        Fuel::Hydro | Fuel::Solar | Fuel::Wind => 0.0,
    }
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn unit(id: String, bus: &str, fuel: Fuel, capacity: f64, ramp_share: f64, profile: Vec<f64>) -> GenerationUnit {
    GenerationUnit {
        id,
        bus: bus.to_string(),
        fuel,
        capacity_mw: capacity,
        cost_per_mwh: default_cost(fuel),
        emission_t_per_gwh: default_rate(fuel),
        ramp_up_mw_per_h: round1(capacity * ramp_share),
        ramp_down_mw_per_h: round1(capacity * ramp_share),
        capability_profile: profile,
    }
}

fn wind_profile(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let phase = rng.gen_range(0.0..2.0 * PI);
    (0..HOURS_PER_DAY)
        .map(|h| {
            let v = 0.5 + 0.3 * (2.0 * PI * h as f64 / 24.0 + phase).cos() + rng.gen_range(-0.1..0.1);
            (v.clamp(0.0, 1.0) * 1000.0).round() / 1000.0
        })
        .collect()
}

fn solar_profile() -> Vec<f64> {
    (0..HOURS_PER_DAY)
        .map(|h| {
            let v = (PI * (h as f64 - 6.0) / 12.0).sin();
            (v.max(0.0) * 1000.0).round() / 1000.0
        })
        .collect()
}

/// Daily load shape for `month`: evening peak, deeper in summer and winter.
fn load_curve(month: u32, shift: f64) -> Vec<f64> {
    let season = 0.85 + 0.15 * (2.0 * PI * (month as f64 - 1.0) / 6.0).cos().abs();
    (0..HOURS_PER_DAY)
        .map(|h| {
            let daily = 0.7 + 0.3 * (2.0 * PI * (h as f64 - 18.0 - shift) / 24.0).cos();
            (season * daily * 1000.0).round() / 1000.0
        })
        .collect()
}

fn curves(regions: &[(&str, f64)]) -> Vec<RepresentativeDay> {
    regions
        .iter()
        .flat_map(|&(region, shift)| {
            (1..=12).map(move |month| RepresentativeDay {
                region: region.to_string(),
                month,
                curve: load_curve(month, shift),
            })
        })
        .collect()
}

fn line(k: usize, from: usize, to: usize, x: f64, cap: f64, len: f64, kv: &[f64]) -> Line {
    Line {
        id: format!("L{k}"),
        from_bus: from.to_string(),
        to_bus: to.to_string(),
        reactance_pu: x,
        capacity_mw: cap,
        length_mi: len,
        voltage_kv: kv[from - 1].min(kv[to - 1]),
    }
}

/// Builds a connected synthetic bundle. Same template and seed, same bundle.
///
/// Panics if the template has fewer than 2 buses (or an empty area).
pub fn synth_case(template: Template, seed: u64) -> Bundle {
    let n = template.buses();
    assert!(n >= 2, "synthetic cases need at least 2 buses");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let kv: Vec<f64> = match template {
        Template::TwoArea { a, b } => {
            assert!(a >= 1 && b >= 1, "both areas need a bus");
            (1..=n).map(|i| if i == a || i == a + 1 { HIGH_KV } else { LOW_KV }).collect()
        }
        _ => (1..=n)
            .map(|i| {
                let high = rng.gen_bool(0.5);
                if i == 1 || (i < n && !high) {
                    LOW_KV
                } else {
                    HIGH_KV
                }
            })
            .collect(),
    };

    let edges: Vec<(usize, usize, f64)> = match template {
        Template::Ring { .. } => {
            let mut e: Vec<_> = (1..n).map(|k| (k, k + 1, 1.0)).collect();
            if n > 2 {
                e.push((1, n, 1.0));
            }
            e
        }
        Template::Star { .. } => (2..=n).map(|k| (1, k, round1(rng.gen_range(0.05..0.5)).max(0.05))).collect(),
        Template::TwoArea { a, .. } => {
            let mut e: Vec<_> = (1..n).filter(|&k| k != a).map(|k| (k, k + 1, 0.1)).collect();
            e.push((a, a + 1, 0.1));
            e
        }
        Template::Mesh { .. } => {
            let mut e = Vec::new();
            let mut order: Vec<usize> = (2..=n).collect();
            order.shuffle(&mut rng);
            let mut placed = vec![1];
            for &i in &order {
                let j = *placed.choose(&mut rng).expect("placed starts nonempty");
                e.push((j.min(i), j.max(i), rng.gen_range(0.05..0.5)));
                placed.push(i);
            }
            for _ in 0..n / 2 {
                let i = rng.gen_range(1..=n);
                let j = rng.gen_range(1..=n);
                if i != j && !e.iter().any(|&(p, q, _)| (p, q) == (i.min(j), i.max(j))) {
                    e.push((i.min(j), i.max(j), rng.gen_range(0.05..0.5)));
                }
            }
            e
        }
    };
    let lines: Vec<Line> = edges
        .iter()
        .enumerate()
        .map(|(k, &(from, to, x))| {
            let (cap, len) = match template {
                Template::TwoArea { a, .. } if from == a => (100.0, 120.0),
                Template::TwoArea { .. } => (1000.0, 20.0),
                _ => (round1(rng.gen_range(150.0..400.0)), round1(rng.gen_range(10.0..120.0))),
            };
            line(k + 1, from, to, x, cap, len, &kv)
        })
        .collect();

    let (generators, loads, regions) = match template {
        Template::TwoArea { a, b } => {
            let mut gens = Vec::new();
            let wind_each = round1(300.0 / a as f64);
            for i in 1..=a {
                let p = wind_profile(&mut rng);
                gens.push(unit(format!("G{}", gens.len() + 1), &i.to_string(), Fuel::Wind, wind_each, 1.0, p));
            }
            gens.push(unit(
                format!("G{}", gens.len() + 1),
                &(a + 1).to_string(),
                Fuel::Coal,
                400.0,
                0.5,
                vec![1.0; HOURS_PER_DAY],
            ));
            gens.push(unit(
                format!("G{}", gens.len() + 1),
                &n.to_string(),
                Fuel::Gas,
                300.0,
                1.0,
                vec![1.0; HOURS_PER_DAY],
            ));
            let b_buses: Vec<usize> = (a + 1..=n).filter(|&i| kv[i - 1] == LOW_KV || b == 1).collect();
            let mut loads = vec![LoadPoint {
                id: "D1".into(),
                bus: "1".into(),
                peak_mw: 40.0,
                region: "A".into(),
            }];
            for &i in &b_buses {
                loads.push(LoadPoint {
                    id: format!("D{}", loads.len() + 1),
                    bus: i.to_string(),
                    peak_mw: round1(250.0 / b_buses.len() as f64),
                    region: "B".into(),
                });
            }
            (gens, loads, vec![("A", 0.0), ("B", 1.0)])
        }
        _ => {
            let mut gens = Vec::new();
            let mut loads = Vec::new();
            let solar = solar_profile();
            for i in 1..=n {
                let bus = i.to_string();
                let peak = round1(rng.gen_range(20.0..120.0));
                loads.push(LoadPoint {
                    id: format!("D{i}"),
                    bus: bus.clone(),
                    peak_mw: peak,
                    region: "R1".into(),
                });
                let fuel = *[Fuel::Coal, Fuel::Gas, Fuel::Nuclear, Fuel::Other]
                    .choose(&mut rng)
                    .expect("nonempty");
                let cap = (1.3 * peak / (1.0 - DEFAULT_LOSS_RATE)).ceil() + 10.0;
                let ramp = if fuel == Fuel::Gas { 1.0 } else { 0.5 };
                gens.push(unit(format!("G{}", gens.len() + 1), &bus, fuel, cap, ramp, vec![1.0; HOURS_PER_DAY]));
                if rng.gen_bool(0.4) {
                    let fuel = *[Fuel::Wind, Fuel::Solar, Fuel::Hydro].choose(&mut rng).expect("nonempty");
                    let profile = match fuel {
                        Fuel::Wind => wind_profile(&mut rng),
                        Fuel::Solar => solar.clone(),
                        _ => vec![0.6; HOURS_PER_DAY],
                    };
                    let cap = round1(rng.gen_range(20.0..150.0));
                    gens.push(unit(format!("G{}", gens.len() + 1), &bus, fuel, cap, 1.0, profile));
                }
            }
            (gens, loads, vec![("R1", 0.0)])
        }
    };

    let mut counties = Vec::new();
    let mut buses = Vec::with_capacity(n);
    for i in 1..=n {
        let low = kv[i - 1] == LOW_KV;
        let fips = if low { format!("C{i}") } else { String::new() };
        if low {
            let population = match template {
                // EV demand sits in area B
                Template::TwoArea { a, .. } if i <= a => 20_000,
                Template::TwoArea { .. } => 800_000,
                _ => rng.gen_range(5_000..500_000),
            };
            counties.push(County {
                fips: fips.clone(),
                state: if counties.len() % 2 == 0 { "S1" } else { "S2" }.to_string(),
                population,
                annual_gallons: 0.0,
            });
        }
        buses.push(Bus {
            id: i.to_string(),
            name: format!("Bus {i}"),
            voltage_kv: kv[i - 1],
            county: fips,
            region: regions[0].0.to_string(),
        });
    }
    if let Template::TwoArea { a, .. } = template {
        for b in &mut buses[a..] {
            b.region = "B".into();
        }
    }

    let mut state_fuel = BTreeMap::new();
    for c in &counties {
        let per_county = match template {
            Template::TwoArea { .. } => 40e6,
            _ => 20e6,
        };
        *state_fuel.entry(c.state.clone()).or_insert(0.0) += per_county;
    }
    apply_state_fuel(&mut counties, &state_fuel).expect("every synthetic state has populated counties");

    let slack = n.to_string();
    let case = GridCase {
        buses,
        lines,
        generators,
        loads,
        counties,
        time_grid: TimeGrid::daily(),
        loss_rate: DEFAULT_LOSS_RATE,
        slack_buses: vec![slack.clone()],
        thresholds: VoltageThresholds::default(),
    };
    let config = RunConfig {
        slack_buses: vec![slack],
        seed,
        ..RunConfig::default()
    };
    Bundle {
        case,
        curves: curves(&regions),
        state_fuel,
        config,
    }
}
