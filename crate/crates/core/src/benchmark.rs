//! The weak-grid benchmark scenarios: a 0.2 pu load addition and a π/40
//! grid phase jump, both applied at t = 1 s to a converter delivering 1 pu.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::controllers::{ControllerVariant, GainSet};
use crate::error::{GfcError, Result};
use crate::simulator::{Event, ScenarioSpec, SystemParams, DEFAULT_DT};

pub const LOAD_STEP_PU: f64 = 0.2;
pub const PHASE_JUMP_RAD: f64 = PI / 40.0;
pub const EVENT_TIME: f64 = 1.0;
pub const DURATION: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkEvent {
    None,
    LoadStep,
    PhaseJump,
}

impl BenchmarkEvent {
    pub const ALL: [BenchmarkEvent; 3] = [BenchmarkEvent::None, BenchmarkEvent::LoadStep, BenchmarkEvent::PhaseJump];

    pub fn id(self) -> &'static str {
        match self {
            BenchmarkEvent::None => "none",
            BenchmarkEvent::LoadStep => "load-step",
            BenchmarkEvent::PhaseJump => "phase-jump",
        }
    }

    pub fn event(self) -> Event {
        match self {
            BenchmarkEvent::None => Event::None,
            BenchmarkEvent::LoadStep => Event::LoadStep { p_load: LOAD_STEP_PU },
            BenchmarkEvent::PhaseJump => Event::PhaseJump { delta: PHASE_JUMP_RAD },
        }
    }
}

impl fmt::Display for BenchmarkEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for BenchmarkEvent {
    type Err = GfcError;

    fn from_str(s: &str) -> Result<Self> {
        BenchmarkEvent::ALL
            .into_iter()
            .find(|e| e.id() == s)
            .ok_or_else(|| GfcError::InvalidScenario(format!("unknown scenario '{s}'")))
    }
}

/// Default benchmark scenario for one controller variant.
pub fn scenario(variant: ControllerVariant, event: BenchmarkEvent) -> ScenarioSpec {
    let system = SystemParams::default();
    let gains = GainSet::defaults(&system.network.base);
    ScenarioSpec {
        duration: DURATION,
        dt: DEFAULT_DT,
        event_time: EVENT_TIME,
        event: event.event(),
        controller: gains.spec(variant),
        system,
        decimation: 1,
    }
}
