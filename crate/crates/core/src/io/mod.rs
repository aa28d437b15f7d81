//! File formats, configuration, synthetic cases and report emission.

mod bundle;
pub mod config;
mod report;
mod synth;

use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub use bundle::{load_bundle, load_case, write_bundle, Bundle, FILES};
pub use config::RunConfig;
pub use report::{
    dispatch_report, emit_report, ev_report, ptdf_report, sweep_report, upgrade_report, write_atomic, Cell,
    Format, Report, Table,
};
pub use synth::{default_cost, default_rate, synth_case, Template};

/// Wind cut-in speed, m/s.
pub const CUT_IN_MPS: f64 = 3.0;
/// Wind cut-off speed, m/s.
pub const CUT_OFF_MPS: f64 = 15.0;

/// A validation failure located in its source file.
#[derive(Debug, Clone, PartialEq)]
pub struct LocatedViolation {
    pub file: String,
    pub line: usize,
    pub entity: String,
    pub message: String,
}

impl fmt::Display for LocatedViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "{}:{}: {}: {}", self.file, self.line, self.entity, self.message)
        } else {
            write!(f, "{}: {}: {}", self.file, self.entity, self.message)
        }
    }
}

fn location(file: &str, line: usize) -> String {
    if line > 0 {
        format!("{file}:{line}")
    } else {
        file.to_string()
    }
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {}{message}", location(file, *line), if column.is_empty() { String::new() } else { format!("column {column}: ") })]
    Parse {
        file: String,
        line: usize,
        column: String,
        message: String,
    },
    #[error("{}: {message}", location(file, *line))]
    CrossReference { file: String, line: usize, message: String },
    #[error("case is invalid:\n{}", violations.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Validation { violations: Vec<LocatedViolation> },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("report table {0} is empty")]
    EmptyReport(String),
}

impl IoError {
    pub(crate) fn parse(file: &str, line: usize, column: &str, message: impl Into<String>) -> Self {
        IoError::Parse {
            file: file.to_string(),
            line,
            column: column.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Per-unit wind power from hub-height speed.
///
/// Cubic between cut-in (3 m/s) and cut-off (15 m/s), zero outside. Without
/// a rated speed the curve reaches 1.0 only at cut-off; with `rated` in
/// (3, 15] it reaches 1.0 at `rated` and stays there until cut-off.
pub fn wind_to_per_unit(speed_mps: f64, rated: Option<f64>) -> f64 {
    if !(CUT_IN_MPS..=CUT_OFF_MPS).contains(&speed_mps) {
        return 0.0;
    }
    let full = rated
        .filter(|r| *r > CUT_IN_MPS && *r <= CUT_OFF_MPS)
        .unwrap_or(CUT_OFF_MPS);
    if speed_mps >= full {
        return 1.0;
    }
    let cube = |v: f64| v * v * v;
    (cube(speed_mps) - cube(CUT_IN_MPS)) / (cube(full) - cube(CUT_IN_MPS))
}
