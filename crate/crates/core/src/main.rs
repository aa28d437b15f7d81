use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde_json::json;

use evgrid::dispatch::{
    relax_network, solve_model_one, solve_model_three, solve_model_three_per_day, solve_model_two, DispatchError,
    EvDemand, OperatingDay,
};
use evgrid::fleet::{county_demands, ev_demand_map, project_growth, FUEL_GROWTH_RATE, LOAD_GROWTH_RATE};
use evgrid::grid::{validate_case, GridCase};
use evgrid::io::config::parse_sweep_spec;
use evgrid::io::{
    dispatch_report, emit_report, ev_report, load_bundle, ptdf_report, sweep_report, synth_case, upgrade_report,
    write_bundle, Bundle, Format, IoError, Report, RunConfig, Template,
};
use evgrid::ptdf::NetworkPtdf;
use evgrid::scenario::{month_loads, run_sweep, ScenarioError};

#[derive(Parser)]
#[command(name = "evgrid", version, about = "EV electrification emissions on a DC network")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Csv)]
    format: OutFormat,
    /// Configuration override, `key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a bundle.
    Validate { bundle: PathBuf },
    /// Island and slack summary; `--dump` adds the full matrix.
    Ptdf {
        bundle: PathBuf,
        #[arg(long)]
        dump: bool,
    },
    /// Cost-minimizing base dispatch for one representative day.
    Dispatch {
        bundle: PathBuf,
        #[arg(long)]
        month: Option<u32>,
    },
    /// Emissions-minimizing re-dispatch with EV charging.
    EvDispatch {
        bundle: PathBuf,
        #[arg(long)]
        penetration: Option<f64>,
        /// Re-solve on a network without line limits.
        #[arg(long)]
        relaxed: bool,
        #[arg(long)]
        month: Option<u32>,
    },
    /// Minimum MW·mile upgrades meeting a daily EV emission cap.
    Upgrade {
        bundle: PathBuf,
        /// Daily cap on EV emissions, t.
        #[arg(long)]
        emax: f64,
        #[arg(long)]
        penetration: Option<f64>,
        /// Solve each day alone and take the per-line maximum.
        #[arg(long)]
        per_day_envelope: bool,
        /// Single day; otherwise every day of the configured day set.
        #[arg(long)]
        month: Option<u32>,
    },
    /// Penetration × renewable-level sweep.
    Sweep {
        bundle: PathBuf,
        #[arg(long)]
        spec: PathBuf,
    },
    /// Write a synthetic bundle to `--out`.
    Synth {
        #[arg(long, default_value = "ring")]
        template: String,
        #[arg(long, default_value_t = 3)]
        buses: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

enum Failure {
    Input(String),
    Infeasible(String),
    Output(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Output(_) => 1,
            Failure::Infeasible(_) => 2,
            Failure::Input(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Infeasible(m) | Failure::Output(m) => m,
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<DispatchError> for Failure {
    fn from(e: DispatchError) -> Self {
        match e {
            DispatchError::InfeasibleBaseCase { .. }
            | DispatchError::InfeasibleEvDemand { .. }
            | DispatchError::InfeasibleTarget { .. }
            | DispatchError::Unbounded { .. } => Failure::Infeasible(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Dispatch(d) => d.into(),
            e => Failure::Input(e.to_string()),
        }
    }
}

fn overrides(set: &[String]) -> Result<BTreeMap<String, String>, Failure> {
    set.iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Failure::Input(format!("--set expects key=value, got {kv:?}")))
        })
        .collect()
}

/// Case with load and fuel growth applied, plus the load multiplier.
fn grown(bundle: &Bundle) -> Result<(GridCase, f64), Failure> {
    let years = bundle.config.growth_years;
    let bad = |e: evgrid::fleet::FleetError| Failure::Input(e.to_string());
    let load = project_growth(1.0, LOAD_GROWTH_RATE, years).map_err(bad)?;
    let fuel = project_growth(1.0, FUEL_GROWTH_RATE, years).map_err(bad)?;
    let mut case = bundle.case.clone();
    for c in &mut case.counties {
        c.annual_gallons *= fuel;
    }
    Ok((case, load))
}

fn demand(case: &GridCase, config: &RunConfig, penetration: Option<f64>) -> Result<EvDemand, Failure> {
    let fleet = config.fleet.with_penetration(penetration.unwrap_or(config.fleet.penetration));
    for w in fleet.validate().map_err(|e| Failure::Input(e.to_string()))? {
        warn!("{w}");
    }
    Ok(ev_demand_map(&county_demands(&case.counties, &fleet, &BTreeMap::new())))
}

fn check_residual(what: &str, residual: f64, config: &RunConfig) {
    if residual > config.residual_tolerance {
        warn!("{what}: primal residual {residual:e} exceeds tolerance {:e}", config.residual_tolerance);
    }
}

fn month_of(month: Option<u32>, config: &RunConfig) -> Result<u32, Failure> {
    let m = month.unwrap_or(config.month);
    if (1..=12).contains(&m) {
        Ok(m)
    } else {
        Err(Failure::Input(format!("month {m} outside 1..=12")))
    }
}

fn ptdf_of(case: &GridCase) -> Result<NetworkPtdf, Failure> {
    NetworkPtdf::build(case).map_err(|e| Failure::Input(e.to_string()))
}

fn emit(report: Report, config: &RunConfig, format: Format, out: &Path) -> Result<(), Failure> {
    let config_echo = serde_json::to_value(config).map_err(|e| Failure::Output(e.to_string()))?;
    let report = report.with("config", config_echo);
    let paths = emit_report(&report, format, out).map_err(|e| match e {
        IoError::EmptyReport(_) => Failure::Input(e.to_string()),
        e => Failure::Output(e.to_string()),
    })?;
    for p in paths {
        info!("wrote {}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let set = overrides(&cli.set)?;
    let format = match cli.format {
        OutFormat::Csv => Format::Csv,
        OutFormat::Json => Format::Json,
    };
    let out = cli.out.as_path();
    match cli.command {
        Command::Synth { template, buses, seed } => {
            let t = Template::from_name(&template, buses)
                .ok_or_else(|| Failure::Input(format!("unknown template {template:?}")))?;
            if buses < 2 {
                return Err(Failure::Input("--buses must be at least 2".into()));
            }
            let bundle = synth_case(t, seed);
            write_bundle(&bundle, out).map_err(|e| Failure::Output(e.to_string()))?;
            println!("wrote {} buses, {} lines to {}", bundle.case.buses.len(), bundle.case.lines.len(), out.display());
        }
        Command::Validate { bundle } => {
            let b = load_bundle(&bundle, &set)?;
            // load_bundle already rejects invalid cases; this is the summary
            debug_assert!(validate_case(&b.case).is_ok());
            let ptdf = ptdf_of(&b.case)?;
            println!(
                "ok: {} buses, {} lines, {} generators, {} loads, {} counties, slack {}",
                b.case.buses.len(),
                b.case.lines.len(),
                b.case.generators.len(),
                b.case.loads.len(),
                b.case.counties.len(),
                ptdf.slack_buses().join(",")
            );
            emit(ptdf_report(&b.case, &ptdf, false), &b.config, format, out)?;
        }
        Command::Ptdf { bundle, dump } => {
            let b = load_bundle(&bundle, &set)?;
            let ptdf = ptdf_of(&b.case)?;
            emit(ptdf_report(&b.case, &ptdf, dump), &b.config, format, out)?;
        }
        Command::Dispatch { bundle, month } => {
            let b = load_bundle(&bundle, &set)?;
            let month = month_of(month, &b.config)?;
            let (case, growth) = grown(&b)?;
            let loads = month_loads(&case, &b.curves, month, growth)?;
            let ptdf = ptdf_of(&case)?;
            let base = solve_model_one(&case, &loads, &ptdf)?;
            check_residual("dispatch", base.max_residual, &b.config);
            println!("cost {} $, emissions {} t", base.cost_total, base.emissions_total_t);
            emit(dispatch_report(&case, &base).with("month", json!(month)), &b.config, format, out)?;
        }
        Command::EvDispatch {
            bundle,
            penetration,
            relaxed,
            month,
        } => {
            let b = load_bundle(&bundle, &set)?;
            let month = month_of(month, &b.config)?;
            let (case, growth) = grown(&b)?;
            let demand = demand(&case, &b.config, penetration)?;
            let loads = month_loads(&case, &b.curves, month, growth)?;
            let ptdf = ptdf_of(&case)?;
            let base = solve_model_one(&case, &loads, &ptdf)?;
            let relaxed = relaxed || b.config.relaxed;
            // The relaxed comparison keeps the constrained base dispatch.
            let network = if relaxed { relax_network(&case) } else { case.clone() };
            let ev = solve_model_two(&network, &loads, &base, &demand, &ptdf)?;
            check_residual("ev-dispatch", ev.max_residual, &b.config);
            println!("e_ev {} t", ev.e_ev_t);
            let report = ev_report(&network, &ev)
                .with("month", json!(month))
                .with("relaxed", json!(relaxed))
                .with("penetration", json!(penetration.unwrap_or(b.config.fleet.penetration)));
            emit(report, &b.config, format, out)?;
        }
        Command::Upgrade {
            bundle,
            emax,
            penetration,
            per_day_envelope,
            month,
        } => {
            let b = load_bundle(&bundle, &set)?;
            if !(emax.is_finite() && emax >= 0.0) {
                return Err(Failure::Input(format!("--emax must be finite and >= 0, got {emax}")));
            }
            let (case, growth) = grown(&b)?;
            let demand = demand(&case, &b.config, penetration)?;
            let ptdf = ptdf_of(&case)?;
            let months: Vec<u32> = match month {
                Some(m) => vec![month_of(Some(m), &b.config)?],
                None => b.config.day_set.members().into_iter().map(|(m, _)| m).collect(),
            };
            let days = months
                .iter()
                .map(|&m| {
                    let loads = month_loads(&case, &b.curves, m, growth)?;
                    let base = solve_model_one(&case, &loads, &ptdf)?;
                    Ok(OperatingDay {
                        label: format!("month {m}"),
                        loads,
                        base,
                    })
                })
                .collect::<Result<Vec<_>, Failure>>()?;
            let plan = if per_day_envelope {
                solve_model_three_per_day(&case, &days, &demand, emax, &ptdf)?
            } else {
                solve_model_three(&case, &days, &demand, emax, &ptdf)?
            };
            println!("{} MW·mi over {} lines", plan.objective_mw_mile, plan.binding_lines.len());
            let report = upgrade_report(&plan).with("per_day_envelope", json!(per_day_envelope));
            emit(report, &b.config, format, out)?;
        }
        Command::Sweep { bundle, spec } => {
            let b = load_bundle(&bundle, &set)?;
            let text = fs::read_to_string(&spec).map_err(|e| Failure::Input(format!("{}: {e}", spec.display())))?;
            let name = spec.file_name().map_or("spec".into(), |n| n.to_string_lossy().into_owned());
            let spec = parse_sweep_spec(&text, &name, &b.config)?;
            let table = run_sweep(&spec, &b.case, &b.curves, &b.config.fleet)?;
            let failed = table.rows.iter().filter(|r| r.status != "optimal").count();
            println!("{} rows, {} failed", table.rows.len(), failed);
            emit(sweep_report(&table), &b.config, format, out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            // usage errors are input errors; clap's own code 2 means infeasible here
            return ExitCode::from(3);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
