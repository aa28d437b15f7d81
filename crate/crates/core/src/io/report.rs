//! Result tables and run metadata, written as CSV or JSON.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use super::IoError;
use crate::dispatch::{BaseDispatch, EvDispatch, UpgradePlan, FLAG_CYCLIC_RAMP};
use crate::grid::GridCase;
use crate::ptdf::NetworkPtdf;
use crate::scenario::SweepTable;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Num(f64),
    Int(i64),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Num(x) => x.to_string(),
            Cell::Int(i) => i.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            // JSON has no infinities; they keep their CSV spelling
            Cell::Num(x) if !x.is_finite() => Value::String(x.to_string()),
            Cell::Num(x) => json!(x),
            Cell::Int(i) => json!(i),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

/// One output table; `name` becomes the file stem.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, headers: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }
}

/// Tables plus a JSON summary. The first table is the primary result and
/// must not be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub tables: Vec<Table>,
    pub summary: Value,
}

impl Report {
    fn new(kind: &str, tables: Vec<Table>) -> Self {
        Report {
            tables,
            summary: json!({ "report": kind, "version": env!("CARGO_PKG_VERSION") }),
        }
    }

    /// Sets one summary field, replacing any previous value.
    pub fn with(mut self, key: &str, value: Value) -> Self {
        if let Value::Object(map) = &mut self.summary {
            map.insert(key.to_string(), value);
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Writes `bytes` to a temporary file next to `path` and renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| IoError::io(parent, e))?;
    tmp.write_all(bytes).map_err(|e| IoError::io(path, e))?;
    tmp.persist(path).map_err(|e| IoError::io(path, e.error))?;
    Ok(())
}

fn table_csv(t: &Table) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&t.headers)?;
    for row in &t.rows {
        w.write_record(row.iter().map(Cell::csv))?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

fn table_json(t: &Table) -> Value {
    Value::Array(
        t.rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = t.headers.iter().cloned().zip(row.iter().map(Cell::json)).collect();
                Value::Object(obj)
            })
            .collect(),
    )
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("JSON values always serialize");
    out.push(b'\n');
    out
}

/// Writes every table as `<name>.csv` or `<name>.json` plus `summary.json`
/// into `out_dir`. Returns the written paths in order.
pub fn emit_report(report: &Report, format: Format, out_dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    match report.tables.first() {
        None => return Err(IoError::EmptyReport("report".into())),
        Some(t) if t.rows.is_empty() => return Err(IoError::EmptyReport(t.name.clone())),
        Some(_) => {}
    }
    fs::create_dir_all(out_dir).map_err(|e| IoError::io(out_dir, e))?;
    let mut written = Vec::with_capacity(report.tables.len() + 1);
    for t in &report.tables {
        let (path, bytes) = match format {
            Format::Csv => {
                let path = out_dir.join(format!("{}.csv", t.name));
                let bytes = table_csv(t).map_err(|e| IoError::io(&path, std::io::Error::other(e)))?;
                (path, bytes)
            }
            Format::Json => (out_dir.join(format!("{}.json", t.name)), pretty(&table_json(t))),
        };
        write_atomic(&path, &bytes)?;
        written.push(path);
    }
    let path = out_dir.join("summary.json");
    write_atomic(&path, &pretty(&report.summary))?;
    written.push(path);
    Ok(written)
}

fn hourly<'a>(name: &str, headers: &[&str], ids: impl Iterator<Item = &'a str>, series: &[Vec<f64>]) -> Table {
    let mut t = Table::new(name, headers);
    for (id, values) in ids.zip(series) {
        for (h, v) in values.iter().enumerate() {
            t.push(vec![id.into(), (h + 1).into(), (*v).into()]);
        }
    }
    t
}

fn flow_table(case: &GridCase, flows: &[Vec<f64>]) -> Table {
    let mut t = Table::new("flows", &["line_id", "hour", "flow_mw", "capacity_mw"]);
    for (l, values) in case.lines.iter().zip(flows) {
        for (h, v) in values.iter().enumerate() {
            t.push(vec![l.id.as_str().into(), (h + 1).into(), (*v).into(), l.capacity_mw.into()]);
        }
    }
    t
}

/// Model I: hourly generation and line flows.
pub fn dispatch_report(case: &GridCase, base: &BaseDispatch) -> Report {
    let gen = hourly(
        "generation",
        &["gen_id", "hour", "p_mw"],
        case.generators.iter().map(|g| g.id.as_str()),
        &base.p_star,
    );
    Report::new("dispatch", vec![gen, flow_table(case, &base.flows)])
        .with("cost_total", json!(base.cost_total))
        .with("emissions_total_t", json!(base.emissions_total_t))
        .with("max_residual", json!(base.max_residual))
        .with("slack_buses", json!(base.slack_buses))
        .with("flags", json!([FLAG_CYCLIC_RAMP]))
}

/// Model II: re-dispatch, charging schedule and resulting flows.
pub fn ev_report(case: &GridCase, ev: &EvDispatch) -> Report {
    let redispatch = hourly(
        "redispatch",
        &["gen_id", "hour", "delta_p_mw"],
        case.generators.iter().map(|g| g.id.as_str()),
        &ev.delta_p,
    );
    let mut charging = Table::new("charging", &["county", "bus_id", "hour", "charging_mw"]);
    for (s, values) in ev.stations.iter().zip(&ev.charging) {
        for (h, v) in values.iter().enumerate() {
            charging.push(vec![s.county.as_str().into(), s.bus_id.as_str().into(), (h + 1).into(), (*v).into()]);
        }
    }
    Report::new("ev_dispatch", vec![redispatch, charging, flow_table(case, &ev.flows)])
        .with("e_ev_t", json!(ev.e_ev_t))
        .with("emissions_total_t", json!(ev.emissions_total_t))
        .with("county_residual_mwh", json!(ev.county_residual_mwh))
        .with("max_residual", json!(ev.max_residual))
        .with("flags", json!([FLAG_CYCLIC_RAMP]))
}

/// Model III: one row per line, upgraded or not.
pub fn upgrade_report(plan: &UpgradePlan) -> Report {
    let mut t = Table::new("upgrade", &["line_id", "delta_f_mw", "length_mi", "mw_mile"]);
    for l in &plan.lines {
        t.push(vec![
            l.line_id.as_str().into(),
            l.delta_f_mw.into(),
            l.length_mi.into(),
            l.mw_mile().into(),
        ]);
    }
    Report::new("upgrade", vec![t])
        .with("objective_mw_mile", json!(plan.objective_mw_mile))
        .with("e_ev_max", json!(plan.e_ev_max))
        .with("achieved_e_ev_t", json!(plan.achieved_e_ev_t))
        .with("day_labels", json!(plan.day_labels))
        .with("binding_lines", json!(plan.binding_lines))
        .with("flags", json!(plan.flags))
}

pub fn sweep_report(table: &SweepTable) -> Report {
    let mut t = Table::new(
        "sweep",
        &[
            "penetration",
            "renewable_level",
            "mode",
            "e_ev_t",
            "e_icv_t",
            "e_v_t",
            "congestion_induced_t",
            "status",
        ],
    );
    for r in &table.rows {
        t.push(vec![
            r.penetration.into(),
            r.renewable_level.map_or(Cell::from("current"), Cell::Num),
            r.mode.to_string().into(),
            r.e_ev_t.into(),
            r.e_icv_t.into(),
            r.e_v_t.into(),
            r.congestion_induced_t.into(),
            r.status.as_str().into(),
        ]);
    }
    Report::new("sweep", vec![t])
        .with("slack_buses", json!(table.slack_buses))
        .with("day_set", json!(table.day_set.to_string()))
        .with("flags", json!(table.flags))
}

/// Island membership of every bus; with `dump`, also the full PTDF matrix
/// (one row per line, one column per bus).
pub fn ptdf_report(case: &GridCase, ptdf: &NetworkPtdf, dump: bool) -> Report {
    let slacks = ptdf.slack_buses();
    let mut buses = Table::new("islands", &["bus_id", "island", "slack"]);
    for (b, bus) in case.buses.iter().enumerate() {
        let slack = if slacks.contains(&bus.id) { "yes" } else { "no" };
        buses.push(vec![bus.id.as_str().into(), ptdf.island_of_bus(b).into(), slack.into()]);
    }
    let mut tables = vec![buses];
    if dump {
        let mut headers = vec!["line_id"];
        headers.extend(case.buses.iter().map(|b| b.id.as_str()));
        let mut t = Table::new("ptdf", &headers);
        for (l, line) in case.lines.iter().enumerate() {
            let mut row: Vec<Cell> = vec![line.id.as_str().into()];
            row.extend((0..case.buses.len()).map(|b| Cell::Num(ptdf.factor(l, b))));
            t.push(row);
        }
        tables.push(t);
    }
    Report::new("ptdf", tables)
        .with("slack_buses", json!(slacks))
        .with("buses", json!(ptdf.num_buses()))
        .with("lines", json!(ptdf.num_lines()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispatch::LineUpgrade;
    use crate::scenario::DaySet;

    fn plan(df: &[f64]) -> UpgradePlan {
        UpgradePlan {
            lines: df
                .iter()
                .enumerate()
                .map(|(i, &d)| LineUpgrade {
                    line_id: format!("L{i}"),
                    delta_f_mw: d,
                    length_mi: 3.0,
                })
                .collect(),
            objective_mw_mile: df.iter().sum::<f64>() * 3.0,
            e_ev_max: 0.0,
            achieved_e_ev_t: vec![0.0],
            day_labels: vec!["m1".into()],
            binding_lines: vec![],
            flags: vec![],
        }
    }

    #[test]
    fn one_upgraded_line_gives_one_nonzero_row() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&upgrade_report(&plan(&[0.0, 10.0, 0.0])), Format::Csv, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("upgrade.csv")).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(rows.len(), 3);
        let nonzero: Vec<&&str> = rows.iter().filter(|r| r.split(',').nth(1) != Some("0")).collect();
        assert_eq!(nonzero, vec![&"L1,10,3,30"]);
    }

    #[test]
    fn empty_sweep_is_an_error() {
        let table = SweepTable {
            rows: vec![],
            slack_buses: vec![],
            day_set: DaySet::Months,
            flags: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let err = emit_report(&sweep_report(&table), Format::Csv, dir.path()).unwrap_err();
        assert!(matches!(err, IoError::EmptyReport(ref n) if n == "sweep"));
        assert!(emit_report(&Report::new("x", vec![]), Format::Json, dir.path()).is_err());
    }

    #[test]
    fn same_report_gives_identical_bytes() {
        let report = upgrade_report(&plan(&[1.5, f64::INFINITY])).with("note", json!("x"));
        for format in [Format::Csv, Format::Json] {
            let a = tempfile::tempdir().unwrap();
            let b = tempfile::tempdir().unwrap();
            let pa = emit_report(&report, format, a.path()).unwrap();
            let pb = emit_report(&report, format, b.path()).unwrap();
            assert_eq!(pa.len(), pb.len());
            for (x, y) in pa.iter().zip(&pb) {
                assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
            }
        }
    }

    #[test]
    fn json_tables_keep_infinite_capacities_readable() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&upgrade_report(&plan(&[f64::INFINITY])), Format::Json, dir.path()).unwrap();
        let v: Value = serde_json::from_slice(&fs::read(dir.path().join("upgrade.json")).unwrap()).unwrap();
        assert_eq!(v[0]["delta_f_mw"], json!("inf"));
        assert_eq!(v[0]["length_mi"], json!(3.0));
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
