//! Command-line front end for the grid-forming converter benchmark.
//!
//! Three verbs: `run` simulates one controller under one event and writes
//! the trace and its metrics, `compare` runs all five controllers on the
//! same event and tabulates the metrics, `linearize` dumps the eigenvalues
//! of the pre-event operating point.
//!
//! Exit codes: 0 success, 1 other failure (I/O, linearization),
//! 2 configuration or usage error, 3 no steady state found, 4 diverged.

pub mod config;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

use gfc_core::benchmark::BenchmarkEvent;
use gfc_core::controllers::ControllerVariant;
use gfc_core::metrics::build_report;
use gfc_core::simulator::{linearize_scenario, run_matrix, run_scenario, ScenarioRun};
use gfc_core::GfcError;
use thiserror::Error;

use config::{ConfigError, RunConfig, ValidationError};
use output::Row;

pub const EXIT_OK: u8 = 0;
pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NO_CONVERGENCE: u8 = 3;
pub const EXIT_DIVERGED: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Sim { context: String, source: GfcError },
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{failed} of {total} runs failed")]
    Partial { failed: usize, total: usize, code: u8 },
}

impl From<ValidationError> for CliError {
    fn from(e: ValidationError) -> Self {
        CliError::Config(e.into())
    }
}

/// Exit status for a simulation error.
pub fn sim_exit_code(e: &GfcError) -> u8 {
    match e {
        GfcError::NoConvergence { .. } | GfcError::InitInfeasible(_) => EXIT_NO_CONVERGENCE,
        GfcError::Diverged { .. } => EXIT_DIVERGED,
        _ => EXIT_OTHER,
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(ConfigError::Io { .. }) => EXIT_OTHER,
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Sim { source, .. } => sim_exit_code(source),
            CliError::Io { .. } => EXIT_OTHER,
            CliError::Partial { code, .. } => *code,
        }
    }
}

/// Settings common to all verbs, after merging flags into the file.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub controller: Option<ControllerVariant>,
    pub scenario: Option<BenchmarkEvent>,
    pub out: Option<PathBuf>,
    pub dt: Option<f64>,
    pub duration: Option<f64>,
}

impl Options {
    pub fn load(&self) -> Result<RunConfig, CliError> {
        let cfg = match &self.config {
            Some(path) => config::parse_config(path)?,
            None => RunConfig::default(),
        };
        Ok(cfg.with_timing(self.dt, self.duration)?)
    }

    fn out_dir(&self, cfg: &RunConfig) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir))
    }

    fn controller(&self, cfg: &RunConfig) -> Result<ControllerVariant, CliError> {
        self.controller
            .or(cfg.controller)
            .ok_or_else(|| CliError::Usage("no controller given (--controller or `controller` in the config)".into()))
    }

    fn scenario(&self, cfg: &RunConfig) -> Result<BenchmarkEvent, CliError> {
        self.scenario
            .or(cfg.scenario)
            .ok_or_else(|| CliError::Usage("no scenario given (--scenario or `scenario` in the config)".into()))
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, contents).map_err(io)
}

fn json_string(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

pub fn trace_path(out: &Path, v: ControllerVariant, e: BenchmarkEvent) -> PathBuf {
    out.join(format!("{v}_{e}.csv"))
}

pub fn metrics_path(out: &Path, v: ControllerVariant, e: BenchmarkEvent) -> PathBuf {
    out.join(format!("{v}_{e}.metrics.json"))
}

fn write_run(
    cfg: &RunConfig,
    out: &Path,
    v: ControllerVariant,
    e: BenchmarkEvent,
    run: &ScenarioRun,
) -> Result<gfc_core::MetricsReport, CliError> {
    let f_n = cfg.system.f_n;
    let report = build_report(&run.series, run.event_time, f_n, &cfg.metrics).map_err(|source| CliError::Sim {
        context: format!("{v} {e}: metrics"),
        source,
    })?;
    write(&trace_path(out, v, e), &output::trace_csv(&run.series))?;
    let doc = output::RunReport {
        controller: v,
        scenario: e.id(),
        config: output::config_header(cfg),
        metrics: &report,
    };
    write(&metrics_path(out, v, e), &json_string(&doc))?;
    Ok(report)
}

/// Simulates one controller under one event; returns the paths written.
pub fn cmd_run(opts: &Options) -> Result<Vec<PathBuf>, CliError> {
    let cfg = opts.load()?;
    let v = opts.controller(&cfg)?;
    let e = opts.scenario(&cfg)?;
    let out = opts.out_dir(&cfg);
    let spec = cfg.scenario_spec(v, e)?;
    let run = run_scenario(&spec).map_err(|source| CliError::Sim {
        context: format!("{v} {e}"),
        source,
    })?;
    write_run(&cfg, &out, v, e, &run)?;
    Ok(vec![trace_path(&out, v, e), metrics_path(&out, v, e)])
}

/// Result of a comparison, already written to disk.
#[derive(Debug)]
pub struct Comparison {
    pub table: String,
    pub rows: Vec<(ControllerVariant, Row)>,
    pub table_path: PathBuf,
    pub json_path: PathBuf,
}

/// Runs every controller on the same event in parallel and tabulates the
/// metrics. Failed rows are kept in the table.
pub fn cmd_compare(opts: &Options) -> Result<Comparison, CliError> {
    let cfg = opts.load()?;
    let e = opts.scenario(&cfg)?;
    let out = opts.out_dir(&cfg);
    let specs = ControllerVariant::ALL
        .iter()
        .map(|&v| cfg.scenario_spec(v, e))
        .collect::<Result<Vec<_>, _>>()?;
    let runs = run_matrix(&specs);

    let mut rows = Vec::new();
    let mut first_code = None;
    for (&v, run) in ControllerVariant::ALL.iter().zip(&runs) {
        let row = match run {
            Ok(run) => match write_run(&cfg, &out, v, e, run) {
                Ok(report) => Row::Done(report),
                Err(CliError::Io { path, source }) => return Err(CliError::Io { path, source }),
                Err(err) => {
                    first_code.get_or_insert(err.exit_code());
                    Row::Failed(err.to_string())
                }
            },
            Err(err) => {
                first_code.get_or_insert(sim_exit_code(err));
                Row::Failed(err.to_string())
            }
        };
        rows.push((v, row));
    }

    let table = output::comparison_table(e.id(), &rows);
    let table_path = out.join(format!("compare_{e}.txt"));
    let json_path = out.join(format!("compare_{e}.json"));
    write(&table_path, &table)?;
    write(&json_path, &json_string(&output::comparison_json(e.id(), &cfg, &rows)))?;

    if let Some(code) = first_code {
        let failed = rows.iter().filter(|(_, r)| matches!(r, Row::Failed(_))).count();
        eprint!("{table}");
        return Err(CliError::Partial {
            failed,
            total: rows.len(),
            code,
        });
    }
    Ok(Comparison {
        table,
        rows,
        table_path,
        json_path,
    })
}

/// Eigenvalues of the closed loop at the pre-event operating point.
pub fn cmd_linearize(opts: &Options) -> Result<PathBuf, CliError> {
    let cfg = opts.load()?;
    let v = opts.controller(&cfg)?;
    let out = opts.out_dir(&cfg);
    let spec = cfg.scenario_spec(v, BenchmarkEvent::None)?;
    let lin = linearize_scenario(&spec).map_err(|source| CliError::Sim {
        context: format!("{v}: linearization"),
        source,
    })?;
    let path = out.join(format!("{v}_eigenvalues.csv"));
    write(&path, &output::eigenvalue_csv(&lin.modes()))?;
    Ok(path)
}
