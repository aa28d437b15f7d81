//! Study-system domain model: buses, lines, generation fleet, loads,
//! counties and the daily time structure, plus structural validation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default transmission loss rate used when no configuration overrides it.
pub const DEFAULT_LOSS_RATE: f64 = 0.05911;

/// Default voltage (kV) separating charging nodes from upgradable lines.
pub const DEFAULT_VOLTAGE_THRESHOLD_KV: f64 = 200.0;

/// Number of hourly steps in one operational cycle.
pub const HOURS_PER_DAY: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("county {0} is not part of the case")]
    UnknownCounty(String),
    #[error("county {county} has fuel demand but no bus below {threshold_kv} kV")]
    CountyHasNoEligibleBus { county: String, threshold_kv: f64 },
    #[error("bus {0} is not part of the case")]
    UnknownBus(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fuel {
    Coal,
    Gas,
    Nuclear,
    Hydro,
    Solar,
    Wind,
    Other,
}

impl Fuel {
    pub const ALL: [Fuel; 7] = [
        Fuel::Coal,
        Fuel::Gas,
        Fuel::Nuclear,
        Fuel::Hydro,
        Fuel::Solar,
        Fuel::Wind,
        Fuel::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Fuel::Coal => "coal",
            Fuel::Gas => "gas",
            Fuel::Nuclear => "nuclear",
            Fuel::Hydro => "hydro",
            Fuel::Solar => "solar",
            Fuel::Wind => "wind",
            Fuel::Other => "other",
        }
    }

    /// Solar and wind: the sources whose capacity is scaled in renewable sweeps.
    pub fn is_variable_renewable(self) -> bool {
        matches!(self, Fuel::Solar | Fuel::Wind)
    }

    pub fn is_renewable(self) -> bool {
        matches!(self, Fuel::Solar | Fuel::Wind | Fuel::Hydro)
    }
}

impl fmt::Display for Fuel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Fuel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Fuel::ALL
            .into_iter()
            .find(|f| f.as_str() == lower)
            .ok_or_else(|| format!("unknown fuel category {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    pub name: String,
    pub voltage_kv: f64,
    pub county: String,
    pub region: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    pub reactance_pu: f64,
    /// Thermal limit in MW. `f64::INFINITY` marks a relaxed (uncongested) line.
    pub capacity_mw: f64,
    pub length_mi: f64,
    pub voltage_kv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationUnit {
    pub id: String,
    pub bus: String,
    pub fuel: Fuel,
    pub capacity_mw: f64,
    pub cost_per_mwh: f64,
    pub emission_t_per_gwh: f64,
    pub ramp_up_mw_per_h: f64,
    pub ramp_down_mw_per_h: f64,
    /// Per-unit availability for each hour of the cycle.
    pub capability_profile: Vec<f64>,
}

impl GenerationUnit {
    /// Maximum output in hour `t` (0-based).
    pub fn max_output(&self, t: usize) -> f64 {
        self.capacity_mw * self.capability_profile[t]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadPoint {
    pub id: String,
    pub bus: String,
    pub peak_mw: f64,
    pub region: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct County {
    pub fips: String,
    pub state: String,
    pub population: u64,
    pub annual_gallons: f64,
}

/// Hourly steps of one operational cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub steps: usize,
    pub dt_h: f64,
}

impl TimeGrid {
    pub fn daily() -> Self {
        TimeGrid {
            steps: HOURS_PER_DAY,
            dt_h: 1.0,
        }
    }

    /// Shortened horizon; used for hand-checkable fixtures.
    pub fn hours(steps: usize) -> Self {
        TimeGrid { steps, dt_h: 1.0 }
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self::daily()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageThresholds {
    /// Charging stations attach to buses strictly below this voltage.
    pub charging_below_kv: f64,
    /// Only lines strictly above this voltage may be upgraded.
    pub upgrade_above_kv: f64,
}

impl Default for VoltageThresholds {
    fn default() -> Self {
        VoltageThresholds {
            charging_below_kv: DEFAULT_VOLTAGE_THRESHOLD_KV,
            upgrade_above_kv: DEFAULT_VOLTAGE_THRESHOLD_KV,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<GenerationUnit>,
    pub loads: Vec<LoadPoint>,
    pub counties: Vec<County>,
    pub time_grid: TimeGrid,
    pub loss_rate: f64,
    /// Reference bus for each island; every island must contain exactly one.
    pub slack_buses: Vec<String>,
    pub thresholds: VoltageThresholds,
}

impl GridCase {
    pub fn bus_index(&self) -> HashMap<&str, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.as_str(), i))
            .collect()
    }

    pub fn bus_position(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn county(&self, fips: &str) -> Option<&County> {
        self.counties.iter().find(|c| c.fips == fips)
    }

    /// Lines eligible for capacity upgrades (strictly above the threshold).
    pub fn is_upgradable(&self, line: &Line) -> bool {
        line.voltage_kv > self.thresholds.upgrade_above_kv
    }
}

/// One invariant violation found by [`validate_case`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub entity: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, entity: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            entity: entity.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

fn finite_positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

fn finite_nonnegative(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

/// Checks every structural and range invariant of a case. Pure; never fails.
pub fn validate_case(case: &GridCase) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut seen = HashSet::new();
    for bus in &case.buses {
        let entity = format!("bus {}", bus.id);
        if !seen.insert(bus.id.as_str()) {
            report.push(&entity, "duplicate bus id");
        }
        if !finite_positive(bus.voltage_kv) {
            report.push(&entity, format!("voltage_kv must be > 0, got {}", bus.voltage_kv));
        }
    }
    let known: HashSet<&str> = case.buses.iter().map(|b| b.id.as_str()).collect();

    let mut line_ids = HashSet::new();
    for line in &case.lines {
        let entity = format!("line {}", line.id);
        if !line_ids.insert(line.id.as_str()) {
            report.push(&entity, "duplicate line id");
        }
        for end in [&line.from_bus, &line.to_bus] {
            if !known.contains(end.as_str()) {
                report.push(&entity, format!("references missing bus {end}"));
            }
        }
        if line.from_bus == line.to_bus {
            report.push(&entity, "from_bus equals to_bus");
        }
        if !finite_positive(line.reactance_pu) {
            report.push(&entity, format!("reactance_pu must be > 0, got {}", line.reactance_pu));
        }
        // +inf is the relaxed-network sentinel
        if line.capacity_mw.is_nan() || line.capacity_mw <= 0.0 {
            report.push(&entity, format!("capacity_mw must be > 0, got {}", line.capacity_mw));
        }
        if !finite_nonnegative(line.length_mi) {
            report.push(&entity, format!("length_mi must be >= 0, got {}", line.length_mi));
        }
        if !finite_positive(line.voltage_kv) {
            report.push(&entity, format!("voltage_kv must be > 0, got {}", line.voltage_kv));
        }
    }

    let steps = case.time_grid.steps;
    let mut gen_ids = HashSet::new();
    for gen in &case.generators {
        let entity = format!("generator {}", gen.id);
        if !gen_ids.insert(gen.id.as_str()) {
            report.push(&entity, "duplicate generator id");
        }
        if !known.contains(gen.bus.as_str()) {
            report.push(&entity, format!("references missing bus {}", gen.bus));
        }
        for (field, value) in [
            ("capacity_mw", gen.capacity_mw),
            ("ramp_up_mw_per_h", gen.ramp_up_mw_per_h),
            ("ramp_down_mw_per_h", gen.ramp_down_mw_per_h),
            ("emission_t_per_gwh", gen.emission_t_per_gwh),
        ] {
            if !finite_nonnegative(value) {
                report.push(&entity, format!("{field} must be >= 0, got {value}"));
            }
        }
        if !gen.cost_per_mwh.is_finite() {
            report.push(&entity, "cost_per_mwh must be finite");
        }
        if gen.capability_profile.len() != steps {
            report.push(
                &entity,
                format!(
                    "capability profile has {} values, expected {steps}",
                    gen.capability_profile.len()
                ),
            );
        }
        if let Some(bad) = gen
            .capability_profile
            .iter()
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            report.push(&entity, format!("capability value {bad} outside [0, 1]"));
        }
    }

    let mut load_ids = HashSet::new();
    for load in &case.loads {
        let entity = format!("load {}", load.id);
        if !load_ids.insert(load.id.as_str()) {
            report.push(&entity, "duplicate load id");
        }
        if !known.contains(load.bus.as_str()) {
            report.push(&entity, format!("references missing bus {}", load.bus));
        }
        if !finite_nonnegative(load.peak_mw) {
            report.push(&entity, format!("peak_mw must be >= 0, got {}", load.peak_mw));
        }
    }

    let mut fips = HashSet::new();
    for county in &case.counties {
        let entity = format!("county {}", county.fips);
        if !fips.insert(county.fips.as_str()) {
            report.push(&entity, "duplicate county fips");
        }
        if county.population == 0 {
            report.push(&entity, "population must be > 0");
        }
        if !finite_nonnegative(county.annual_gallons) {
            report.push(
                &entity,
                format!("annual_gallons must be >= 0, got {}", county.annual_gallons),
            );
        }
    }

    if !(0.0..1.0).contains(&case.loss_rate) {
        report.push(
            "case",
            format!("loss rate must lie in [0, 1), got {}", case.loss_rate),
        );
    }
    if case.time_grid.steps == 0 {
        report.push("case", "time grid has no steps");
    }
    if case.time_grid.dt_h != 1.0 {
        report.push("case", format!("dt_h must be 1 hour, got {}", case.time_grid.dt_h));
    }

    for slack in &case.slack_buses {
        if !known.contains(slack.as_str()) {
            report.push(format!("slack {slack}"), "slack bus does not exist");
        }
    }
    // Island checks only make sense when every line endpoint resolves.
    let endpoints_ok = case
        .lines
        .iter()
        .all(|l| known.contains(l.from_bus.as_str()) && known.contains(l.to_bus.as_str()));
    if endpoints_ok {
        for (k, island) in islands(case).iter().enumerate() {
            let slacks: Vec<&str> = island
                .iter()
                .map(|&i| case.buses[i].id.as_str())
                .filter(|id| case.slack_buses.iter().any(|s| s == id))
                .collect();
            if slacks.len() != 1 {
                report.push(
                    format!("island {k}"),
                    format!(
                        "expected exactly one slack bus, found {} (buses starting at {})",
                        slacks.len(),
                        case.buses[island[0]].id
                    ),
                );
            }
        }
    }

    report
}

/// Connected components of the bus graph, as bus indices.
///
/// Components are ordered by their smallest bus index and each component
/// lists its buses in ascending index order, so the result is stable for a
/// given case. Lines with unknown endpoints are ignored.
pub fn islands(case: &GridCase) -> Vec<Vec<usize>> {
    let n = case.buses.len();
    let index = case.bus_index();
    let mut parent: Vec<usize> = (0..n).collect();

    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    for line in &case.lines {
        if let (Some(&a), Some(&b)) = (
            index.get(line.from_bus.as_str()),
            index.get(line.to_bus.as_str()),
        ) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|g| g[0]);
    out
}

/// Island number of every bus, following the ordering of [`islands`].
pub fn island_of_buses(case: &GridCase) -> Vec<usize> {
    let mut owner = vec![0; case.buses.len()];
    for (k, island) in islands(case).iter().enumerate() {
        for &b in island {
            owner[b] = k;
        }
    }
    owner
}

/// Buses of `county` that may host charging stations (strictly below the
/// charging voltage threshold), as bus indices in case order.
///
/// An empty set is only an error when the county actually needs to place
/// EV load.
pub fn charging_sites(case: &GridCase, county: &County) -> Result<Vec<usize>, GridError> {
    if case.county(&county.fips).is_none() {
        return Err(GridError::UnknownCounty(county.fips.clone()));
    }
    let threshold = case.thresholds.charging_below_kv;
    let sites: Vec<usize> = case
        .buses
        .iter()
        .enumerate()
        .filter(|(_, b)| b.county == county.fips && b.voltage_kv < threshold)
        .map(|(i, _)| i)
        .collect();
    if sites.is_empty() && county.annual_gallons > 0.0 {
        return Err(GridError::CountyHasNoEligibleBus {
            county: county.fips.clone(),
            threshold_kv: threshold,
        });
    }
    Ok(sites)
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn well_formed_two_bus_case_has_empty_report() {
        assert!(validate_case(&two_bus()).is_ok());
    }

    #[test]
    fn missing_bus_reference_is_named() {
        let mut case = two_bus();
        case.lines[0].to_bus = "99".into();
        let report = validate_case(&case);
        assert_eq!(report.violations.len(), 1, "{report}");
        let v = &report.violations[0];
        assert_eq!(v.entity, "line L1");
        assert!(v.message.contains("99"));
    }

    #[test]
    fn loss_rate_out_of_range() {
        let mut case = two_bus();
        case.loss_rate = 1.2;
        let report = validate_case(&case);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].message.contains("loss rate"));
    }

    #[test]
    fn validation_is_idempotent() {
        let mut case = two_bus();
        case.lines[0].reactance_pu = -1.0;
        case.loss_rate = 2.0;
        let before = case.clone();
        assert_eq!(validate_case(&case), validate_case(&case));
        assert_eq!(case, before);
    }

    #[test]
    fn island_needs_exactly_one_slack() {
        let mut case = two_bus();
        case.slack_buses = vec!["1".into(), "2".into()];
        assert!(!validate_case(&case).is_ok());
        case.slack_buses.clear();
        assert!(!validate_case(&case).is_ok());
    }

    #[test]
    fn ring_is_one_island() {
        let mut case = two_bus();
        case.buses.push(bus("3", 138.0, "B"));
        case.lines = vec![
            line("a", "1", "2", 1.0, 10.0),
            line("b", "2", "3", 1.0, 10.0),
            line("c", "1", "3", 1.0, 10.0),
        ];
        assert_eq!(islands(&case), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn disjoint_pairs_are_two_islands() {
        let mut case = two_bus();
        case.buses.push(bus("3", 138.0, "B"));
        case.buses.push(bus("4", 138.0, "B"));
        case.lines.push(line("L2", "3", "4", 1.0, 10.0));
        assert_eq!(islands(&case), vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn three_interconnections() {
        let mut case = two_bus();
        case.buses = (1..=6).map(|i| bus(&i.to_string(), 345.0, "A")).collect();
        case.lines = vec![
            line("w", "1", "2", 1.0, 10.0),
            line("t", "3", "4", 1.0, 10.0),
            line("e", "5", "6", 1.0, 10.0),
        ];
        let parts = islands(&case);
        assert_eq!(parts.len(), 3);
        assert!(parts.iter().all(|p| p.len() == 2));
    }

    #[test]
    fn charging_threshold_is_strict() {
        let mut case = two_bus();
        case.buses = vec![
            bus("1", 115.0, "C"),
            bus("2", 345.0, "C"),
            bus("3", 200.0, "C"),
        ];
        case.counties = vec![county("C", 10.0)];
        let sites = charging_sites(&case, &case.counties[0]).unwrap();
        assert_eq!(sites, vec![0]);
    }

    #[test]
    fn county_without_low_voltage_bus() {
        let mut case = two_bus();
        case.buses = vec![bus("1", 500.0, "C")];
        case.counties = vec![county("C", 10.0)];
        assert!(matches!(
            charging_sites(&case, &case.counties[0]),
            Err(GridError::CountyHasNoEligibleBus { .. })
        ));
        // no demand, no error
        case.counties[0].annual_gallons = 0.0;
        assert_eq!(charging_sites(&case, &case.counties[0]).unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn two_subtransmission_buses_both_returned() {
        let mut case = two_bus();
        case.buses = vec![bus("1", 138.0, "C"), bus("2", 138.0, "C")];
        case.counties = vec![county("C", 10.0)];
        assert_eq!(charging_sites(&case, &case.counties[0]).unwrap(), vec![0, 1]);
    }

    #[test]
    fn fuel_round_trips_through_text() {
        for fuel in Fuel::ALL {
            assert_eq!(fuel.as_str().parse::<Fuel>().unwrap(), fuel);
        }
        assert!("peat".parse::<Fuel>().is_err());
    }
}
