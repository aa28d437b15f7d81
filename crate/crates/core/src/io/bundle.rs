//! Case bundles: a directory of fixed-schema CSV files plus `config.txt`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use super::config::{env_pairs, parse_pairs};
use super::{wind_to_per_unit, write_atomic, IoError, LocatedViolation, RunConfig};
use crate::fleet::{apply_state_fuel, FleetError};
use crate::grid::{
    islands, validate_case, Bus, County, Fuel, GenerationUnit, GridCase, Line, LoadPoint, TimeGrid,
    VoltageThresholds, HOURS_PER_DAY,
};
use crate::scenario::RepresentativeDay;

/// Files of a bundle, in the order they are written.
pub const FILES: [&str; 9] = [
    "buses.csv",
    "lines.csv",
    "generators.csv",
    "gen_profiles.csv",
    "loads.csv",
    "regional_curves.csv",
    "counties.csv",
    "state_fuel.csv",
    "config.txt",
];

/// Optional hub-height wind speeds; converted to capability profiles.
const WIND_SPEEDS: &str = "wind_speeds.csv";

const BUS_HEADER: &[&str] = &["bus_id", "name", "voltage_kv", "county_fips", "region"];
const LINE_HEADER: &[&str] = &[
    "line_id",
    "from_bus",
    "to_bus",
    "reactance_pu",
    "capacity_mw",
    "length_mi",
    "voltage_kv",
];
const GEN_HEADER: &[&str] = &[
    "gen_id",
    "bus_id",
    "fuel",
    "capacity_mw",
    "cost_per_mwh",
    "emission_t_per_gwh",
    "ramp_up_mw_per_h",
    "ramp_down_mw_per_h",
];
const PROFILE_HEADER: &[&str] = &["gen_id", "hour", "per_unit"];
const LOAD_HEADER: &[&str] = &["load_id", "bus_id", "peak_mw", "region"];
const CURVE_HEADER: &[&str] = &["region", "month", "hour", "per_unit"];
const COUNTY_HEADER: &[&str] = &["fips", "state", "population"];
const FUEL_HEADER: &[&str] = &["state", "annual_gallons"];
const WIND_HEADER: &[&str] = &["gen_id", "hour", "speed_mps"];

/// A loaded bundle: the validated case plus the inputs that stay outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub case: GridCase,
    /// Region × month daily shapes, ordered by region then month.
    pub curves: Vec<RepresentativeDay>,
    pub state_fuel: BTreeMap<String, f64>,
    pub config: RunConfig,
}

#[derive(Deserialize)]
struct BusRow {
    bus_id: String,
    name: String,
    voltage_kv: f64,
    county_fips: String,
    region: String,
}

#[derive(Deserialize)]
struct LineRow {
    line_id: String,
    from_bus: String,
    to_bus: String,
    reactance_pu: f64,
    capacity_mw: f64,
    length_mi: f64,
    voltage_kv: f64,
}

#[derive(Deserialize)]
struct GenRow {
    gen_id: String,
    bus_id: String,
    fuel: Fuel,
    capacity_mw: f64,
    cost_per_mwh: f64,
    emission_t_per_gwh: f64,
    ramp_up_mw_per_h: f64,
    ramp_down_mw_per_h: f64,
}

#[derive(Deserialize)]
struct HourRow {
    gen_id: String,
    hour: usize,
    value: f64,
}

#[derive(Deserialize)]
struct LoadRow {
    load_id: String,
    bus_id: String,
    peak_mw: f64,
    region: String,
}

#[derive(Deserialize)]
struct CurveRow {
    region: String,
    month: u32,
    hour: usize,
    per_unit: f64,
}

#[derive(Deserialize)]
struct CountyRow {
    fips: String,
    state: String,
    population: u64,
}

#[derive(Deserialize)]
struct FuelRow {
    state: String,
    annual_gallons: f64,
}

/// Reads `dir/name`, checks the header and deserializes every record.
/// Returns `(line number, row)` pairs.
fn read_rows<T: DeserializeOwned>(dir: &Path, name: &str, header: &[&str]) -> Result<Vec<(usize, T)>, IoError> {
    let path = dir.join(name);
    let file = fs::File::open(&path).map_err(|e| IoError::io(&path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let got = rdr.headers().map_err(|e| csv_error(name, header, e))?.clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(IoError::parse(
            name,
            1,
            "",
            format!("expected header {}, got {}", header.join(","), got.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    // Rows are deserialized positionally so the hour files can share one struct.
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(name, header, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row = record.deserialize::<T>(None).map_err(|e| csv_error(name, header, e))?;
        out.push((line, row));
    }
    Ok(out)
}

fn csv_error(name: &str, header: &[&str], e: csv::Error) -> IoError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => {
            let column = err.field().and_then(|f| header.get(f as usize)).copied();
            IoError::parse(name, line, column.unwrap_or(""), err.kind().to_string())
        }
        _ => IoError::parse(name, line, "", e.to_string()),
    }
}

fn cross(file: &str, line: usize, message: String) -> IoError {
    IoError::CrossReference {
        file: file.to_string(),
        line,
        message,
    }
}

/// Collects `gen_id,hour,value` rows into complete 24-hour series.
fn hourly_series(
    file: &str,
    rows: Vec<(usize, HourRow)>,
    gens: &HashSet<&str>,
) -> Result<BTreeMap<String, Vec<Option<f64>>>, IoError> {
    let mut out: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    let mut first_line: HashMap<String, usize> = HashMap::new();
    for (line, r) in rows {
        if !gens.contains(r.gen_id.as_str()) {
            return Err(cross(
                file,
                line,
                format!("{file} references generator {} absent from generators.csv", r.gen_id),
            ));
        }
        if !(1..=HOURS_PER_DAY).contains(&r.hour) {
            return Err(IoError::parse(file, line, "hour", format!("hour {} outside 1..=24", r.hour)));
        }
        first_line.entry(r.gen_id.clone()).or_insert(line);
        let series = out.entry(r.gen_id.clone()).or_insert_with(|| vec![None; HOURS_PER_DAY]);
        if series[r.hour - 1].replace(r.value).is_some() {
            return Err(IoError::parse(
                file,
                line,
                "hour",
                format!("duplicate hour {} for generator {}", r.hour, r.gen_id),
            ));
        }
    }
    for (id, series) in &out {
        let have = series.iter().flatten().count();
        if have != HOURS_PER_DAY {
            return Err(IoError::parse(
                file,
                first_line[id],
                "hour",
                format!("generator {id} has {have} of {HOURS_PER_DAY} hours"),
            ));
        }
    }
    Ok(out)
}

/// Loads a bundle using `EVGRID_*` environment variables and `overrides`
/// on top of `config.txt`.
pub fn load_bundle(dir: &Path, overrides: &BTreeMap<String, String>) -> Result<Bundle, IoError> {
    load_bundle_layered(dir, &env_pairs(std::env::vars()), overrides)
}

/// Loads a bundle with the configuration from `config.txt` only.
pub fn load_case(dir: &Path) -> Result<GridCase, IoError> {
    Ok(load_bundle_layered(dir, &BTreeMap::new(), &BTreeMap::new())?.case)
}

pub(crate) fn load_bundle_layered(
    dir: &Path,
    env: &BTreeMap<String, String>,
    cli: &BTreeMap<String, String>,
) -> Result<Bundle, IoError> {
    let config_path = dir.join("config.txt");
    let file_pairs = match fs::read_to_string(&config_path) {
        Ok(text) => parse_pairs(&text, "config.txt")?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
        Err(e) => return Err(IoError::io(&config_path, e)),
    };
    let config = RunConfig::resolve(&[("config.txt", &file_pairs), ("environment", env), ("command line", cli)])?;

    // entity → (file, line), for locating validation failures
    let mut located: HashMap<String, (&str, usize)> = HashMap::new();

    let bus_rows: Vec<(usize, BusRow)> = read_rows(dir, "buses.csv", BUS_HEADER)?;
    let bus_ids: HashSet<String> = bus_rows.iter().map(|(_, r)| r.bus_id.clone()).collect();
    let buses: Vec<Bus> = bus_rows
        .iter()
        .map(|(line, r)| {
            located.insert(format!("bus {}", r.bus_id), ("buses.csv", *line));
            Bus {
                id: r.bus_id.clone(),
                name: r.name.clone(),
                voltage_kv: r.voltage_kv,
                county: r.county_fips.clone(),
                region: r.region.clone(),
            }
        })
        .collect();
    let need_bus = |file: &str, line: usize, what: String, bus: &str| {
        if bus_ids.contains(bus) {
            Ok(())
        } else {
            Err(cross(file, line, format!("{what} references bus {bus} absent from buses.csv")))
        }
    };

    let mut lines = Vec::new();
    for (line, r) in read_rows::<LineRow>(dir, "lines.csv", LINE_HEADER)? {
        need_bus("lines.csv", line, format!("line {}", r.line_id), &r.from_bus)?;
        need_bus("lines.csv", line, format!("line {}", r.line_id), &r.to_bus)?;
        located.insert(format!("line {}", r.line_id), ("lines.csv", line));
        lines.push(Line {
            id: r.line_id,
            from_bus: r.from_bus,
            to_bus: r.to_bus,
            reactance_pu: r.reactance_pu,
            capacity_mw: r.capacity_mw,
            length_mi: r.length_mi,
            voltage_kv: r.voltage_kv,
        });
    }

    let mut generators = Vec::new();
    for (line, r) in read_rows::<GenRow>(dir, "generators.csv", GEN_HEADER)? {
        need_bus("generators.csv", line, format!("generator {}", r.gen_id), &r.bus_id)?;
        located.insert(format!("generator {}", r.gen_id), ("generators.csv", line));
        generators.push(GenerationUnit {
            id: r.gen_id,
            bus: r.bus_id,
            fuel: r.fuel,
            capacity_mw: r.capacity_mw,
            cost_per_mwh: r.cost_per_mwh,
            emission_t_per_gwh: r.emission_t_per_gwh,
            ramp_up_mw_per_h: r.ramp_up_mw_per_h,
            ramp_down_mw_per_h: r.ramp_down_mw_per_h,
            capability_profile: vec![1.0; HOURS_PER_DAY],
        });
    }
    let gen_ids: HashSet<&str> = generators.iter().map(|g| g.id.as_str()).collect();
    let profiles = hourly_series(
        "gen_profiles.csv",
        read_rows(dir, "gen_profiles.csv", PROFILE_HEADER)?,
        &gen_ids,
    )?;
    let winds = if dir.join(WIND_SPEEDS).exists() {
        hourly_series(WIND_SPEEDS, read_rows(dir, WIND_SPEEDS, WIND_HEADER)?, &gen_ids)?
    } else {
        BTreeMap::new()
    };
    for id in winds.keys() {
        if profiles.contains_key(id) {
            return Err(cross(
                WIND_SPEEDS,
                0,
                format!("generator {id} has both a capability profile and wind speeds"),
            ));
        }
    }
    for g in &mut generators {
        if let Some(p) = profiles.get(&g.id) {
            g.capability_profile = p.iter().map(|v| v.unwrap_or(0.0)).collect();
        } else if let Some(w) = winds.get(&g.id) {
            g.capability_profile = w
                .iter()
                .map(|v| wind_to_per_unit(v.unwrap_or(0.0), config.wind_rated_speed_mps))
                .collect();
        }
    }

    let mut loads = Vec::new();
    let mut load_region_line: BTreeMap<String, usize> = BTreeMap::new();
    for (line, r) in read_rows::<LoadRow>(dir, "loads.csv", LOAD_HEADER)? {
        need_bus("loads.csv", line, format!("load {}", r.load_id), &r.bus_id)?;
        located.insert(format!("load {}", r.load_id), ("loads.csv", line));
        load_region_line.entry(r.region.clone()).or_insert(line);
        loads.push(LoadPoint {
            id: r.load_id,
            bus: r.bus_id,
            peak_mw: r.peak_mw,
            region: r.region,
        });
    }

    let mut curve_map: BTreeMap<(String, u32), (usize, Vec<Option<f64>>)> = BTreeMap::new();
    for (line, r) in read_rows::<CurveRow>(dir, "regional_curves.csv", CURVE_HEADER)? {
        if !(1..=12).contains(&r.month) {
            return Err(IoError::parse("regional_curves.csv", line, "month", format!("month {} outside 1..=12", r.month)));
        }
        if !(1..=HOURS_PER_DAY).contains(&r.hour) {
            return Err(IoError::parse("regional_curves.csv", line, "hour", format!("hour {} outside 1..=24", r.hour)));
        }
        if !(r.per_unit.is_finite() && r.per_unit >= 0.0) {
            return Err(IoError::parse(
                "regional_curves.csv",
                line,
                "per_unit",
                format!("per_unit must be finite and >= 0, got {}", r.per_unit),
            ));
        }
        let (_, series) = curve_map
            .entry((r.region.clone(), r.month))
            .or_insert_with(|| (line, vec![None; HOURS_PER_DAY]));
        if series[r.hour - 1].replace(r.per_unit).is_some() {
            return Err(IoError::parse(
                "regional_curves.csv",
                line,
                "hour",
                format!("duplicate hour {} for region {} month {}", r.hour, r.region, r.month),
            ));
        }
    }
    let mut curves = Vec::with_capacity(curve_map.len());
    for ((region, month), (line, series)) in curve_map {
        let have = series.iter().flatten().count();
        if have != HOURS_PER_DAY {
            return Err(IoError::parse(
                "regional_curves.csv",
                line,
                "hour",
                format!("region {region} month {month} has {have} of {HOURS_PER_DAY} hours"),
            ));
        }
        curves.push(RepresentativeDay {
            region,
            month,
            curve: series.into_iter().flatten().collect(),
        });
    }
    for (region, line) in &load_region_line {
        let months = curves.iter().filter(|d| &d.region == region).count();
        if months != 12 {
            return Err(cross(
                "loads.csv",
                *line,
                format!("region {region} has {months} of 12 months in regional_curves.csv"),
            ));
        }
    }

    let mut counties = Vec::new();
    let mut county_line: HashMap<String, usize> = HashMap::new();
    for (line, r) in read_rows::<CountyRow>(dir, "counties.csv", COUNTY_HEADER)? {
        located.insert(format!("county {}", r.fips), ("counties.csv", line));
        county_line.entry(r.state.clone()).or_insert(line);
        counties.push(County {
            fips: r.fips,
            state: r.state,
            population: r.population,
            annual_gallons: 0.0,
        });
    }
    let fips: HashSet<&str> = counties.iter().map(|c| c.fips.as_str()).collect();
    for (line, r) in &bus_rows {
        if !r.county_fips.is_empty() && !fips.contains(r.county_fips.as_str()) {
            return Err(cross(
                "buses.csv",
                *line,
                format!("bus {} references county {} absent from counties.csv", r.bus_id, r.county_fips),
            ));
        }
    }

    let mut state_fuel = BTreeMap::new();
    let mut fuel_line = HashMap::new();
    for (line, r) in read_rows::<FuelRow>(dir, "state_fuel.csv", FUEL_HEADER)? {
        if state_fuel.insert(r.state.clone(), r.annual_gallons).is_some() {
            return Err(IoError::parse("state_fuel.csv", line, "state", format!("duplicate state {}", r.state)));
        }
        fuel_line.insert(r.state, line);
    }
    apply_state_fuel(&mut counties, &state_fuel).map_err(|e| match &e {
        FleetError::MissingStateFuel(s) => cross(
            "counties.csv",
            county_line.get(s).copied().unwrap_or(0),
            format!("counties of state {s} have no row in state_fuel.csv"),
        ),
        FleetError::EmptyState(s) => cross(
            "state_fuel.csv",
            fuel_line.get(s).copied().unwrap_or(0),
            format!("state {s} has no county with positive population in counties.csv"),
        ),
        _ => cross("state_fuel.csv", fuel_line.values().min().copied().unwrap_or(0), e.to_string()),
    })?;

    let mut case = GridCase {
        buses,
        lines,
        generators,
        loads,
        counties,
        time_grid: TimeGrid::daily(),
        loss_rate: config.loss_rate,
        slack_buses: config.slack_buses.clone(),
        thresholds: VoltageThresholds {
            charging_below_kv: config.charging_below_kv,
            upgrade_above_kv: config.upgrade_above_kv,
        },
    };
    if case.slack_buses.is_empty() {
        case.slack_buses = islands(&case).iter().map(|isl| case.buses[isl[0]].id.clone()).collect();
    }

    let report = validate_case(&case);
    if !report.is_ok() {
        let violations = report
            .violations
            .into_iter()
            .map(|v| {
                let (file, line) = if v.entity.starts_with("slack ") {
                    ("config.txt", 0)
                } else {
                    located.get(&v.entity).copied().unwrap_or(("case", 0))
                };
                LocatedViolation {
                    file: file.to_string(),
                    line,
                    entity: v.entity,
                    message: v.message,
                }
            })
            .collect();
        return Err(IoError::Validation { violations });
    }

    Ok(Bundle {
        case,
        curves,
        state_fuel,
        config,
    })
}

fn to_csv<F>(header: &[&str], fill: F) -> Result<Vec<u8>, csv::Error>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<(), csv::Error>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    fill(&mut w)?;
    w.into_inner().map_err(|e| e.into_error().into())
}

/// Writes `bundle` as a bundle directory. Every file is replaced atomically.
/// The config echoes the case's slack buses, loss rate and thresholds.
pub fn write_bundle(bundle: &Bundle, dir: &Path) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let case = &bundle.case;
    let csv_io = |name: &'static str| move |e: csv::Error| IoError::io(dir.join(name), std::io::Error::other(e));
    let s = |x: f64| x.to_string();

    let files: Vec<(&str, Vec<u8>)> = vec![
        (
            "buses.csv",
            to_csv(BUS_HEADER, |w| {
                case.buses.iter().try_for_each(|b| {
                    w.write_record([&b.id, &b.name, &s(b.voltage_kv), &b.county, &b.region])
                })
            })
            .map_err(csv_io("buses.csv"))?,
        ),
        (
            "lines.csv",
            to_csv(LINE_HEADER, |w| {
                case.lines.iter().try_for_each(|l| {
                    w.write_record([
                        &l.id,
                        &l.from_bus,
                        &l.to_bus,
                        &s(l.reactance_pu),
                        &s(l.capacity_mw),
                        &s(l.length_mi),
                        &s(l.voltage_kv),
                    ])
                })
            })
            .map_err(csv_io("lines.csv"))?,
        ),
        (
            "generators.csv",
            to_csv(GEN_HEADER, |w| {
                case.generators.iter().try_for_each(|g| {
                    w.write_record([
                        g.id.as_str(),
                        &g.bus,
                        g.fuel.as_str(),
                        &s(g.capacity_mw),
                        &s(g.cost_per_mwh),
                        &s(g.emission_t_per_gwh),
                        &s(g.ramp_up_mw_per_h),
                        &s(g.ramp_down_mw_per_h),
                    ])
                })
            })
            .map_err(csv_io("generators.csv"))?,
        ),
        (
            "gen_profiles.csv",
            to_csv(PROFILE_HEADER, |w| {
                case.generators.iter().try_for_each(|g| {
                    g.capability_profile
                        .iter()
                        .enumerate()
                        .try_for_each(|(h, v)| w.write_record([&g.id, &(h + 1).to_string(), &s(*v)]))
                })
            })
            .map_err(csv_io("gen_profiles.csv"))?,
        ),
        (
            "loads.csv",
            to_csv(LOAD_HEADER, |w| {
                case.loads
                    .iter()
                    .try_for_each(|d| w.write_record([&d.id, &d.bus, &s(d.peak_mw), &d.region]))
            })
            .map_err(csv_io("loads.csv"))?,
        ),
        (
            "regional_curves.csv",
            to_csv(CURVE_HEADER, |w| {
                bundle.curves.iter().try_for_each(|d| {
                    d.curve.iter().enumerate().try_for_each(|(h, v)| {
                        w.write_record([&d.region, &d.month.to_string(), &(h + 1).to_string(), &s(*v)])
                    })
                })
            })
            .map_err(csv_io("regional_curves.csv"))?,
        ),
        (
            "counties.csv",
            to_csv(COUNTY_HEADER, |w| {
                case.counties
                    .iter()
                    .try_for_each(|c| w.write_record([&c.fips, &c.state, &c.population.to_string()]))
            })
            .map_err(csv_io("counties.csv"))?,
        ),
        (
            "state_fuel.csv",
            to_csv(FUEL_HEADER, |w| {
                bundle
                    .state_fuel
                    .iter()
                    .try_for_each(|(state, g)| w.write_record([state, &s(*g)]))
            })
            .map_err(csv_io("state_fuel.csv"))?,
        ),
        ("config.txt", {
            let mut config = bundle.config.clone();
            config.slack_buses = case.slack_buses.clone();
            config.loss_rate = case.loss_rate;
            config.charging_below_kv = case.thresholds.charging_below_kv;
            config.upgrade_above_kv = case.thresholds.upgrade_above_kv;
            config.to_text().into_bytes()
        }),
    ];
    for (name, bytes) in files {
        write_atomic(&dir.join(name), &bytes)?;
    }
    Ok(())
}
