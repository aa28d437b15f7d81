//! Flat `key = value` run configuration. Values resolve in order file,
//! then `EVGRID_<KEY>` environment variables, then command-line overrides.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::IoError;
use crate::fleet::FleetAssumptions;
use crate::grid::{DEFAULT_LOSS_RATE, DEFAULT_VOLTAGE_THRESHOLD_KV};
use crate::scenario::{DaySet, LevelMode, ScenarioSpec};

pub const ENV_PREFIX: &str = "EVGRID_";

/// Every accepted key, in the order `to_text` writes them.
pub const KEYS: &[&str] = &[
    "slack_buses",
    "loss_rate",
    "icv_mpge",
    "ev_mpge",
    "kwh_per_gallon_ev",
    "kg_co2_per_gallon",
    "penetration",
    "renewable_targets",
    "level_mode",
    "relaxed",
    "charging_below_kv",
    "upgrade_above_kv",
    "residual_tolerance",
    "day_set",
    "growth_years",
    "month",
    "wind_rated_speed_mps",
    "seed",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// Empty: the first bus (file order) of every island.
    pub slack_buses: Vec<String>,
    pub loss_rate: f64,
    pub fleet: FleetAssumptions,
    /// `None` entries keep the case's own mix.
    pub renewable_targets: Vec<Option<f64>>,
    pub level_mode: LevelMode,
    pub relaxed: bool,
    pub charging_below_kv: f64,
    pub upgrade_above_kv: f64,
    /// Solutions with a larger primal residual are reported with a warning.
    pub residual_tolerance: f64,
    pub day_set: DaySet,
    pub growth_years: f64,
    /// Default representative month for single-day runs.
    pub month: u32,
    /// Rated wind speed for the plateau variant of the wind curve.
    pub wind_rated_speed_mps: Option<f64>,
    /// Seed for synthetic case generation.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            slack_buses: Vec::new(),
            loss_rate: DEFAULT_LOSS_RATE,
            fleet: FleetAssumptions::default(),
            renewable_targets: vec![None],
            level_mode: LevelMode::PerIsland,
            relaxed: false,
            charging_below_kv: DEFAULT_VOLTAGE_THRESHOLD_KV,
            upgrade_above_kv: DEFAULT_VOLTAGE_THRESHOLD_KV,
            residual_tolerance: 1e-6,
            day_set: DaySet::Months,
            growth_years: 0.0,
            month: 1,
            wind_rated_speed_mps: None,
            seed: 1,
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str, file: &str) -> Result<BTreeMap<String, String>, IoError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(IoError::parse(file, n + 1, "", format!("expected key = value, got {line:?}")));
        };
        let key = k.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(IoError::parse(file, n + 1, &key, "unknown configuration key"));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

/// `EVGRID_<KEY>` variables from `vars`, keyed by lower-case config key.
pub fn env_pairs(vars: impl IntoIterator<Item = (String, String)>) -> BTreeMap<String, String> {
    vars.into_iter()
        .filter_map(|(k, v)| {
            let key = k.strip_prefix(ENV_PREFIX)?.to_ascii_lowercase();
            KEYS.contains(&key.as_str()).then_some((key, v))
        })
        .collect()
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

impl RunConfig {
    /// Resolves layers in increasing priority.
    pub fn resolve(layers: &[(&str, &BTreeMap<String, String>)]) -> Result<Self, IoError> {
        let mut merged: BTreeMap<&str, (&str, &str)> = BTreeMap::new();
        for (source, pairs) in layers {
            for (k, v) in pairs.iter() {
                if !KEYS.contains(&k.as_str()) {
                    return Err(IoError::parse(source, 0, k, "unknown configuration key"));
                }
                merged.insert(k.as_str(), (source, v.as_str()));
            }
        }
        let mut c = RunConfig::default();
        for (key, (source, value)) in merged {
            let bad = |msg: &str| IoError::parse(source, 0, key, format!("{msg}: {value:?}"));
            let num = || value.parse::<f64>().map_err(|_| bad("expected a number"));
            match key {
                "slack_buses" => c.slack_buses = list(value).map(String::from).collect(),
                "loss_rate" => c.loss_rate = num()?,
                "icv_mpge" => c.fleet.icv_mpge = num()?,
                "ev_mpge" => c.fleet.ev_mpge = num()?,
                "kwh_per_gallon_ev" => c.fleet.kwh_per_gallon_ev = num()?,
                "kg_co2_per_gallon" => c.fleet.kg_co2_per_gallon = num()?,
                "penetration" => c.fleet.penetration = num()?,
                "renewable_targets" => {
                    c.renewable_targets = list(value)
                        .map(|s| match s {
                            "current" => Ok(None),
                            s => s.parse::<f64>().map(Some).map_err(|_| bad("expected numbers or 'current'")),
                        })
                        .collect::<Result<_, _>>()?
                }
                "level_mode" => {
                    c.level_mode = match value {
                        "per_island" => LevelMode::PerIsland,
                        "system" => LevelMode::System,
                        _ => return Err(bad("expected per_island or system")),
                    }
                }
                "relaxed" => c.relaxed = value.parse().map_err(|_| bad("expected true or false"))?,
                "charging_below_kv" => c.charging_below_kv = num()?,
                "upgrade_above_kv" => c.upgrade_above_kv = num()?,
                "residual_tolerance" => c.residual_tolerance = num()?,
                "day_set" => {
                    c.day_set = match value {
                        "months" => DaySet::Months,
                        "seasons" => DaySet::Seasons,
                        _ => return Err(bad("expected months or seasons")),
                    }
                }
                "growth_years" => c.growth_years = num()?,
                "month" => {
                    c.month = value
                        .parse()
                        .ok()
                        .filter(|m| (1..=12).contains(m))
                        .ok_or_else(|| bad("expected a month 1..12"))?
                }
                "wind_rated_speed_mps" => {
                    c.wind_rated_speed_mps = match value {
                        "" | "none" => None,
                        _ => Some(num()?),
                    }
                }
                "seed" => c.seed = value.parse().map_err(|_| bad("expected an unsigned integer"))?,
                _ => unreachable!("keys are checked above"),
            }
        }
        c.fleet
            .validate()
            .map_err(|e| IoError::parse("config", 0, "", e.to_string()))?;
        Ok(c)
    }

    /// Text form accepted by [`parse_pairs`]; every key is written.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let targets: Vec<String> = self
            .renewable_targets
            .iter()
            .map(|t| t.map_or("current".to_string(), |v| v.to_string()))
            .collect();
        let pairs: [(&str, String); 18] = [
            ("slack_buses", self.slack_buses.join(",")),
            ("loss_rate", self.loss_rate.to_string()),
            ("icv_mpge", self.fleet.icv_mpge.to_string()),
            ("ev_mpge", self.fleet.ev_mpge.to_string()),
            ("kwh_per_gallon_ev", self.fleet.kwh_per_gallon_ev.to_string()),
            ("kg_co2_per_gallon", self.fleet.kg_co2_per_gallon.to_string()),
            ("penetration", self.fleet.penetration.to_string()),
            ("renewable_targets", targets.join(",")),
            (
                "level_mode",
                match self.level_mode {
                    LevelMode::PerIsland => "per_island".into(),
                    LevelMode::System => "system".into(),
                },
            ),
            ("relaxed", self.relaxed.to_string()),
            ("charging_below_kv", self.charging_below_kv.to_string()),
            ("upgrade_above_kv", self.upgrade_above_kv.to_string()),
            ("residual_tolerance", self.residual_tolerance.to_string()),
            ("day_set", self.day_set.to_string()),
            ("growth_years", self.growth_years.to_string()),
            ("month", self.month.to_string()),
            (
                "wind_rated_speed_mps",
                self.wind_rated_speed_mps.map_or("none".into(), |v| v.to_string()),
            ),
            ("seed", self.seed.to_string()),
        ];
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Parses a sweep spec (same `key = value` syntax as the config). Missing
/// keys fall back to `config`; the relaxed comparison is on by default.
pub fn parse_sweep_spec(text: &str, file: &str, config: &RunConfig) -> Result<ScenarioSpec, IoError> {
    let mut spec = ScenarioSpec {
        penetrations: vec![config.fleet.penetration],
        renewable_levels: config.renewable_targets.clone(),
        level_mode: config.level_mode,
        include_relaxed: true,
        day_set: config.day_set,
        growth_years: config.growth_years,
    };
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |column: &str, msg: String| IoError::parse(file, n + 1, column, msg);
        let Some((k, v)) = line.split_once('=') else {
            return Err(bad("", format!("expected key = value, got {line:?}")));
        };
        let (key, value) = (k.trim(), v.trim());
        // Reuse the config parser for the keys the two formats share.
        let shared = |config_key: &str| {
            let pairs = BTreeMap::from([(config_key.to_string(), value.to_string())]);
            RunConfig::resolve(&[(file, &pairs)]).map_err(|e| bad(key, e.to_string()))
        };
        match key {
            "penetrations" => {
                spec.penetrations = list(value)
                    .map(|s| s.parse::<f64>().map_err(|_| bad(key, format!("expected numbers: {value:?}"))))
                    .collect::<Result<_, _>>()?
            }
            "renewable_levels" => spec.renewable_levels = shared("renewable_targets")?.renewable_targets,
            "level_mode" => spec.level_mode = shared("level_mode")?.level_mode,
            "include_relaxed" => spec.include_relaxed = shared("relaxed")?.relaxed,
            "day_set" => spec.day_set = shared("day_set")?.day_set,
            "growth_years" => spec.growth_years = shared("growth_years")?.growth_years,
            _ => return Err(bad(key, "unknown sweep spec key".into())),
        }
    }
    spec.validate().map_err(|e| IoError::parse(file, 0, "", e.to_string()))?;
    Ok(spec)
}
