//! Scenario configuration files.
//!
//! The file is TOML. Every key is optional; missing keys take the benchmark
//! defaults. The resolved [`RunConfig`] remembers which keys the user set so
//! that reports can say where each number came from.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use gfc_core::benchmark::{self, BenchmarkEvent};
use gfc_core::controllers::{ControllerSpec, ControllerVariant, GainSet, ReactiveDroopSign};
use gfc_core::metrics::MetricSettings;
use gfc_core::network::{FilterParams, GridParams, LoadParams, NetworkParams};
use gfc_core::perunit::{impedance_from_scr, ComplexPu, PerUnitBase};
use gfc_core::simulator::{Event, ScenarioSpec, SystemParams, DEFAULT_DT};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Malformed file: bad syntax, unknown key or wrong value type.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}", self.describe())]
pub struct ParseError {
    /// 1-based line of the offending text, when known.
    pub line: Option<usize>,
    /// Dotted key path, when known.
    pub key: Option<String>,
    pub message: String,
}

impl ParseError {
    fn describe(&self) -> String {
        let mut s = String::from("parse error");
        if let Some(line) = self.line {
            s += &format!(" at line {line}");
        }
        if let Some(key) = &self.key {
            s += &format!(" (key `{key}`)");
        }
        format!("{s}: {}", self.message)
    }
}

/// Well-formed file whose values break a rule.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid configuration: {0}")]
pub struct ValidationError(pub String);

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

/// Where a configuration value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Default,
    User,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Default => "default",
            Source::User => "user",
        })
    }
}

/// Grid impedance, given directly or through its strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridSpec {
    Impedance(ComplexPu),
    Strength { scr: f64, xr_ratio: f64 },
}

impl GridSpec {
    pub fn z_grid(&self) -> Result<ComplexPu, ValidationError> {
        match *self {
            GridSpec::Impedance(z) => Ok(z),
            GridSpec::Strength { scr, xr_ratio } => {
                impedance_from_scr(scr, xr_ratio).map_err(|e| ValidationError(e.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemConfig {
    pub f_n: f64,
    pub grid: GridSpec,
    pub v_grid: f64,
    pub p_target: f64,
    pub v_target: f64,
    pub actuation_lag: f64,
    pub filter: FilterParams,
    pub p_load: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConfig {
    pub duration: f64,
    pub dt: f64,
    pub event_time: f64,
    /// Load connected by the load-step event (pu).
    pub load_step: f64,
    /// Grid angle advance of the phase-jump event (rad).
    pub phase_jump: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: String,
    pub decimation: usize,
}

/// Validated configuration with every default filled in.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub controller: Option<ControllerVariant>,
    pub scenario: Option<BenchmarkEvent>,
    pub system: SystemConfig,
    pub controllers: BTreeMap<ControllerVariant, ControllerSpec>,
    pub scenarios: ScenarioConfig,
    pub metrics: MetricSettings,
    pub output: OutputConfig,
    user_keys: BTreeSet<String>,
}

/// Equality of the resolved values; provenance is not compared.
impl PartialEq for RunConfig {
    fn eq(&self, other: &Self) -> bool {
        self.controller == other.controller
            && self.scenario == other.scenario
            && self.system == other.system
            && self.controllers == other.controllers
            && self.scenarios == other.scenarios
            && self.metrics == other.metrics
            && self.output == other.output
    }
}

// ---------------------------------------------------------------------------
// File schema. Everything is optional so that absent keys can be told apart
// from defaults.

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    controller: Option<ControllerVariant>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario: Option<BenchmarkEvent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    system: Option<RawSystem>,
    #[serde(skip_serializing_if = "Option::is_none")]
    controllers: Option<RawControllers>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scenarios: Option<RawScenarios>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<RawMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<RawOutput>,
}

macro_rules! raw_section {
    ($name:ident { $($field:ident : $ty:ty),* $(,)? } $(, $sub:ident : $subty:ty)*) => {
        #[derive(Debug, Default, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        struct $name {
            $(
                #[serde(skip_serializing_if = "Option::is_none")]
                $field: Option<$ty>,
            )*
            $(
                #[serde(skip_serializing_if = "Option::is_none")]
                $sub: Option<$subty>,
            )*
        }
    };
}

raw_section!(RawSystem {
    f_n: f64,
    z_grid: [f64; 2],
    scr: f64,
    xr_ratio: f64,
    v_grid: f64,
    p_target: f64,
    v_target: f64,
    actuation_lag: f64,
}, filter: RawFilter, load: RawLoad);
raw_section!(RawFilter { l_f: f64, c_f: f64, r_f: f64 });
raw_section!(RawLoad { p_load: f64 });

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControllers {
    #[serde(skip_serializing_if = "Option::is_none")]
    q_sign: Option<ReactiveDroopSign>,
    #[serde(skip_serializing_if = "Option::is_none")]
    droop: Option<RawDroop>,
    #[serde(rename = "vsm-outer", skip_serializing_if = "Option::is_none")]
    vsm_outer: Option<RawVsmOuter>,
    #[serde(rename = "vsm-inner", skip_serializing_if = "Option::is_none")]
    vsm_inner: Option<RawVsmInner>,
    #[serde(skip_serializing_if = "Option::is_none")]
    vadm: Option<RawVadm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pr: Option<RawPr>,
}

raw_section!(RawDroop { k_p: f64, k_q: f64, k_pv: f64, k_iv: f64, k_pc: f64, k_ic: f64 });
raw_section!(RawVsmOuter { j_inertia: f64, d_p: f64, k_q: f64 });
raw_section!(RawVsmInner { j_inertia: f64, d_p: f64, k_q: f64, k_pv: f64, k_iv: f64, k_pc: f64, k_ic: f64 });
raw_section!(RawVadm { j_inertia: f64, d_p: f64, k_q: f64, l_v: f64, r_v: f64, k_pc: f64, k_ic: f64 });
raw_section!(RawPr {
    j_inertia: f64,
    d_p: f64,
    k_q: f64,
    k_p_ab: f64,
    k_r_ab: f64,
    omega_res: f64,
    omega_c: f64,
    k_i_ab: f64,
    r_virt: f64,
});
raw_section!(RawScenarios { duration: f64, dt: f64, event_time: f64, load_step: f64, phase_jump: f64 });
raw_section!(RawMetrics { rocof_window: f64, band_pct: f64, band_floor: f64, pre_window: f64, final_window: f64 });
raw_section!(RawOutput { dir: String, decimation: usize });

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

// ---------------------------------------------------------------------------

/// Reads and validates a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let raw = parse_raw(text)?;
    let user_keys = flatten(&toml::Table::try_from(&raw).expect("raw config serializes"))
        .into_keys()
        .collect();
    let mut cfg = resolve(raw)?;
    cfg.user_keys = user_keys;
    cfg.validate()?;
    Ok(cfg)
}

fn parse_raw(text: &str) -> Result<RawConfig, ParseError> {
    let line_of = |offset: usize| text[..offset.min(text.len())].matches('\n').count() + 1;
    let de = toml::Deserializer::parse(text).map_err(|e| ParseError {
        line: e.span().map(|s| line_of(s.start)),
        key: None,
        message: e.message().trim().to_string(),
    })?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ParseError {
            line: inner.span().map(|s| line_of(s.start)),
            key: (path != ".").then_some(path),
            message: inner.message().trim().to_string(),
        }
    })
}

fn resolve(raw: RawConfig) -> Result<RunConfig, ValidationError> {
    let sys = raw.system.unwrap_or_default();
    let grid = match (sys.z_grid, sys.scr, sys.xr_ratio) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
            return Err(ValidationError(
                "system.z_grid and system.scr/system.xr_ratio are mutually exclusive".into(),
            ))
        }
        (Some([re, im]), None, None) => GridSpec::Impedance(ComplexPu::new(re, im)),
        (None, Some(scr), Some(xr_ratio)) => GridSpec::Strength { scr, xr_ratio },
        (None, Some(_), None) | (None, None, Some(_)) => {
            return Err(ValidationError(
                "system.scr and system.xr_ratio must be given together".into(),
            ))
        }
        (None, None, None) => GridSpec::Impedance(GridParams::default().z_grid),
    };
    let mut filter = FilterParams::default();
    if let Some(f) = sys.filter {
        set(&mut filter.l_f, f.l_f);
        set(&mut filter.c_f, f.c_f);
        set(&mut filter.r_f, f.r_f);
    }
    let defaults = SystemParams::default();
    let system = SystemConfig {
        f_n: sys.f_n.unwrap_or(defaults.network.base.f_n()),
        grid,
        v_grid: sys.v_grid.unwrap_or(defaults.network.grid.v_mag),
        p_target: sys.p_target.unwrap_or(defaults.p_target),
        v_target: sys.v_target.unwrap_or(defaults.v_target),
        actuation_lag: sys.actuation_lag.unwrap_or(defaults.actuation_lag),
        filter,
        p_load: sys.load.and_then(|l| l.p_load).unwrap_or(benchmark::LOAD_STEP_PU),
    };

    let base = PerUnitBase::new(system.f_n, 1.0e6, 690.0).map_err(|e| ValidationError(e.to_string()))?;
    let controllers = resolve_controllers(GainSet::defaults(&base), raw.controllers.unwrap_or_default());

    let sc = raw.scenarios.unwrap_or_default();
    let scenarios = ScenarioConfig {
        duration: sc.duration.unwrap_or(benchmark::DURATION),
        dt: sc.dt.unwrap_or(DEFAULT_DT),
        event_time: sc.event_time.unwrap_or(benchmark::EVENT_TIME),
        load_step: sc.load_step.unwrap_or(system.p_load),
        phase_jump: sc.phase_jump.unwrap_or(benchmark::PHASE_JUMP_RAD),
    };

    let mut metrics = MetricSettings::default();
    if let Some(m) = raw.metrics {
        set(&mut metrics.rocof_window, m.rocof_window);
        set(&mut metrics.band_pct, m.band_pct);
        set(&mut metrics.band_floor, m.band_floor);
        set(&mut metrics.pre_window, m.pre_window);
        set(&mut metrics.final_window, m.final_window);
    }

    let out = raw.output.unwrap_or_default();
    let output = OutputConfig {
        dir: out.dir.unwrap_or_else(|| "out".into()),
        decimation: out.decimation.unwrap_or(1),
    };

    Ok(RunConfig {
        controller: raw.controller,
        scenario: raw.scenario,
        system,
        controllers,
        scenarios,
        metrics,
        output,
        user_keys: BTreeSet::new(),
    })
}

fn resolve_controllers(mut g: GainSet, raw: RawControllers) -> BTreeMap<ControllerVariant, ControllerSpec> {
    if let Some(sign) = raw.q_sign {
        g.droop.q_sign = sign;
        g.vsm.q_sign = sign;
    }
    let mut map = BTreeMap::new();
    for v in ControllerVariant::ALL {
        map.insert(v, g.spec(v));
    }

    if let (Some(r), Some(ControllerSpec::Droop { droop, inner })) = (raw.droop, map.get_mut(&ControllerVariant::Droop)) {
        set(&mut droop.k_p, r.k_p);
        set(&mut droop.k_q, r.k_q);
        set(&mut inner.k_pv, r.k_pv);
        set(&mut inner.k_iv, r.k_iv);
        set(&mut inner.k_pc, r.k_pc);
        set(&mut inner.k_ic, r.k_ic);
    }
    if let (Some(r), Some(ControllerSpec::VsmOuter { vsm })) = (raw.vsm_outer, map.get_mut(&ControllerVariant::VsmOuter)) {
        set(&mut vsm.j_inertia, r.j_inertia);
        set(&mut vsm.d_p, r.d_p);
        set(&mut vsm.k_q, r.k_q);
    }
    if let (Some(r), Some(ControllerSpec::VsmInner { vsm, inner })) = (raw.vsm_inner, map.get_mut(&ControllerVariant::VsmInner)) {
        set(&mut vsm.j_inertia, r.j_inertia);
        set(&mut vsm.d_p, r.d_p);
        set(&mut vsm.k_q, r.k_q);
        set(&mut inner.k_pv, r.k_pv);
        set(&mut inner.k_iv, r.k_iv);
        set(&mut inner.k_pc, r.k_pc);
        set(&mut inner.k_ic, r.k_ic);
    }
    if let (Some(r), Some(ControllerSpec::VirtualAdmittance { vsm, admittance, inner })) =
        (raw.vadm, map.get_mut(&ControllerVariant::VirtualAdmittance))
    {
        set(&mut vsm.j_inertia, r.j_inertia);
        set(&mut vsm.d_p, r.d_p);
        set(&mut vsm.k_q, r.k_q);
        set(&mut admittance.l_v, r.l_v);
        set(&mut admittance.r_v, r.r_v);
        set(&mut inner.k_pc, r.k_pc);
        set(&mut inner.k_ic, r.k_ic);
    }
    if let (Some(r), Some(ControllerSpec::ProportionalResonant { vsm, pr })) =
        (raw.pr, map.get_mut(&ControllerVariant::ProportionalResonant))
    {
        set(&mut vsm.j_inertia, r.j_inertia);
        set(&mut vsm.d_p, r.d_p);
        set(&mut vsm.k_q, r.k_q);
        set(&mut pr.k_p_ab, r.k_p_ab);
        set(&mut pr.k_r_ab, r.k_r_ab);
        set(&mut pr.omega_res, r.omega_res);
        set(&mut pr.omega_c, r.omega_c);
        set(&mut pr.k_i_ab, r.k_i_ab);
        set(&mut pr.r_virt, r.r_virt);
    }
    map
}

/// Dotted paths of every leaf value in a table.
fn flatten(table: &toml::Table) -> BTreeMap<String, toml::Value> {
    fn walk(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
        for (k, v) in table {
            let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            match v {
                toml::Value::Table(t) => walk(&key, t, out),
                other => {
                    out.insert(key, other.clone());
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    walk("", table, &mut out);
    out
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_config_str("").expect("defaults are valid")
    }
}

impl RunConfig {
    pub fn network(&self) -> Result<NetworkParams, ValidationError> {
        let s = &self.system;
        Ok(NetworkParams {
            base: PerUnitBase::new(s.f_n, 1.0e6, 690.0).map_err(|e| ValidationError(e.to_string()))?,
            filter: s.filter,
            grid: GridParams {
                z_grid: s.grid.z_grid()?,
                v_mag: s.v_grid,
                phase: 0.0,
            },
            load: LoadParams {
                p_load: s.p_load,
                connected: false,
            },
        })
    }

    pub fn controller_spec(&self, variant: ControllerVariant) -> ControllerSpec {
        self.controllers[&variant]
    }

    /// Simulation input for one controller and one benchmark event.
    pub fn scenario_spec(
        &self,
        variant: ControllerVariant,
        event: BenchmarkEvent,
    ) -> Result<ScenarioSpec, ValidationError> {
        let sc = &self.scenarios;
        let event = match event {
            BenchmarkEvent::None => Event::None,
            BenchmarkEvent::LoadStep => Event::LoadStep { p_load: sc.load_step },
            BenchmarkEvent::PhaseJump => Event::PhaseJump { delta: sc.phase_jump },
        };
        Ok(ScenarioSpec {
            duration: sc.duration,
            dt: sc.dt,
            event_time: sc.event_time,
            event,
            controller: self.controller_spec(variant),
            system: SystemParams {
                network: self.network()?,
                p_target: self.system.p_target,
                v_target: self.system.v_target,
                actuation_lag: self.system.actuation_lag,
            },
            decimation: self.output.decimation,
        })
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        self.metrics.validate().map_err(|e| ValidationError(e.to_string()))?;
        for v in ControllerVariant::ALL {
            for e in BenchmarkEvent::ALL {
                self.scenario_spec(v, e)?
                    .validate()
                    .map_err(|err| ValidationError(format!("{v}/{e}: {err}")))?;
            }
        }
        Ok(())
    }

    /// Overrides the time step and duration, as given on the command line.
    pub fn with_timing(mut self, dt: Option<f64>, duration: Option<f64>) -> Result<Self, ValidationError> {
        if let Some(dt) = dt {
            self.scenarios.dt = dt;
            self.user_keys.insert("scenarios.dt".into());
        }
        if let Some(d) = duration {
            self.scenarios.duration = d;
            self.user_keys.insert("scenarios.duration".into());
        }
        self.validate()?;
        Ok(self)
    }

    pub fn source(&self, key: &str) -> Source {
        if self.user_keys.contains(key) {
            Source::User
        } else {
            Source::Default
        }
    }

    /// Every resolved value keyed by dotted path, with its source.
    pub fn provenance(&self) -> BTreeMap<String, (toml::Value, Source)> {
        flatten(&self.to_table())
            .into_iter()
            .map(|(k, v)| {
                let s = self.source(&k);
                (k, (v, s))
            })
            .collect()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_raw()).expect("config serializes")
    }

    fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self.to_raw()).expect("config serializes")
    }

    fn to_raw(&self) -> RawConfig {
        let s = &self.system;
        let (z_grid, scr, xr_ratio) = match s.grid {
            GridSpec::Impedance(z) => (Some([z.re, z.im]), None, None),
            GridSpec::Strength { scr, xr_ratio } => (None, Some(scr), Some(xr_ratio)),
        };
        let system = RawSystem {
            f_n: Some(s.f_n),
            z_grid,
            scr,
            xr_ratio,
            v_grid: Some(s.v_grid),
            p_target: Some(s.p_target),
            v_target: Some(s.v_target),
            actuation_lag: Some(s.actuation_lag),
            filter: Some(RawFilter {
                l_f: Some(s.filter.l_f),
                c_f: Some(s.filter.c_f),
                r_f: Some(s.filter.r_f),
            }),
            load: Some(RawLoad { p_load: Some(s.p_load) }),
        };

        let mut c = RawControllers::default();
        for spec in self.controllers.values() {
            match *spec {
                ControllerSpec::Droop { droop, inner } => {
                    c.q_sign = Some(droop.q_sign);
                    c.droop = Some(RawDroop {
                        k_p: Some(droop.k_p),
                        k_q: Some(droop.k_q),
                        k_pv: Some(inner.k_pv),
                        k_iv: Some(inner.k_iv),
                        k_pc: Some(inner.k_pc),
                        k_ic: Some(inner.k_ic),
                    });
                }
                ControllerSpec::VsmOuter { vsm } => {
                    c.vsm_outer = Some(RawVsmOuter {
                        j_inertia: Some(vsm.j_inertia),
                        d_p: Some(vsm.d_p),
                        k_q: Some(vsm.k_q),
                    })
                }
                ControllerSpec::VsmInner { vsm, inner } => {
                    c.vsm_inner = Some(RawVsmInner {
                        j_inertia: Some(vsm.j_inertia),
                        d_p: Some(vsm.d_p),
                        k_q: Some(vsm.k_q),
                        k_pv: Some(inner.k_pv),
                        k_iv: Some(inner.k_iv),
                        k_pc: Some(inner.k_pc),
                        k_ic: Some(inner.k_ic),
                    })
                }
                ControllerSpec::VirtualAdmittance { vsm, admittance, inner } => {
                    c.vadm = Some(RawVadm {
                        j_inertia: Some(vsm.j_inertia),
                        d_p: Some(vsm.d_p),
                        k_q: Some(vsm.k_q),
                        l_v: Some(admittance.l_v),
                        r_v: Some(admittance.r_v),
                        k_pc: Some(inner.k_pc),
                        k_ic: Some(inner.k_ic),
                    })
                }
                ControllerSpec::ProportionalResonant { vsm, pr } => {
                    c.pr = Some(RawPr {
                        j_inertia: Some(vsm.j_inertia),
                        d_p: Some(vsm.d_p),
                        k_q: Some(vsm.k_q),
                        k_p_ab: Some(pr.k_p_ab),
                        k_r_ab: Some(pr.k_r_ab),
                        omega_res: Some(pr.omega_res),
                        omega_c: Some(pr.omega_c),
                        k_i_ab: Some(pr.k_i_ab),
                        r_virt: Some(pr.r_virt),
                    })
                }
            }
        }

        let sc = &self.scenarios;
        let m = &self.metrics;
        RawConfig {
            controller: self.controller,
            scenario: self.scenario,
            system: Some(system),
            controllers: Some(c),
            scenarios: Some(RawScenarios {
                duration: Some(sc.duration),
                dt: Some(sc.dt),
                event_time: Some(sc.event_time),
                load_step: Some(sc.load_step),
                phase_jump: Some(sc.phase_jump),
            }),
            metrics: Some(RawMetrics {
                rocof_window: Some(m.rocof_window),
                band_pct: Some(m.band_pct),
                band_floor: Some(m.band_floor),
                pre_window: Some(m.pre_window),
                final_window: Some(m.final_window),
            }),
            output: Some(RawOutput {
                dir: Some(self.output.dir.clone()),
                decimation: Some(self.output.decimation),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_benchmark() {
        let cfg = RunConfig::default();
        for v in ControllerVariant::ALL {
            for e in BenchmarkEvent::ALL {
                assert_eq!(cfg.scenario_spec(v, e).unwrap(), benchmark::scenario(v, e));
            }
        }
        assert_eq!(cfg.source("system.filter.l_f"), Source::Default);
    }

    #[test]
    fn user_keys_are_tracked() {
        let cfg = parse_config_str("[system.filter]\nc_f = 0.06\n[controllers.pr]\nk_r_ab = 150.0\n").unwrap();
        assert_eq!(cfg.source("system.filter.c_f"), Source::User);
        assert_eq!(cfg.source("controllers.pr.k_r_ab"), Source::User);
        assert_eq!(cfg.source("controllers.pr.k_p_ab"), Source::Default);
        let prov = cfg.provenance();
        assert_eq!(prov["system.filter.c_f"].1, Source::User);
        assert_eq!(prov["system.filter.l_f"].1, Source::Default);
    }

    #[test]
    fn reactive_sign_applies_to_every_variant() {
        let cfg = parse_config_str("[controllers]\nq_sign = \"flipped\"\n").unwrap();
        for spec in cfg.controllers.values() {
            let sign = match spec {
                ControllerSpec::Droop { droop, .. } => droop.q_sign,
                ControllerSpec::VsmOuter { vsm }
                | ControllerSpec::VsmInner { vsm, .. }
                | ControllerSpec::VirtualAdmittance { vsm, .. }
                | ControllerSpec::ProportionalResonant { vsm, .. } => vsm.q_sign,
            };
            assert_eq!(sign, ReactiveDroopSign::Flipped);
        }
    }

    #[test]
    fn parse_errors_carry_line_and_key() {
        let e = parse_raw("[system]\nf_n = 50.0\n\n[system.filter]\nl_f = \"big\"\n").unwrap_err();
        assert_eq!(e.line, Some(5));
        assert_eq!(e.key.as_deref(), Some("system.filter.l_f"));

        let e = parse_raw("[metrics]\nwindow = 0.1\n").unwrap_err();
        assert!(e.message.contains("window"), "{e}");
        assert_eq!(e.line, Some(2));

        let e = parse_raw("controller = \"droop\"\n[system\n").unwrap_err();
        assert_eq!(e.line, Some(2));
    }
}
