//! Simulation workbench for grid-forming converter controls on a weak grid.
//!
//! The crate models a single converter (an ideal voltage source behind an
//! LC filter) connected to a Thevenin grid, implements five grid-forming
//! controllers (droop, virtual synchronous machine with and without inner
//! loops, virtual admittance, proportional-resonant), integrates the closed
//! loop under load-step and phase-jump events, and extracts transient
//! indicators (nadir, ROCOF, overshoot, settling time).

pub mod benchmark;
pub mod controllers;
pub mod error;
pub mod metrics;
pub mod network;
pub mod perunit;
pub mod simulator;

pub use controllers::{ControllerSpec, ControllerVariant, GainSet, Setpoints};
pub use error::{GfcError, Result};
pub use metrics::{build_report, MetricSettings, MetricsReport};
pub use network::{NetworkParams, OperatingPoint};
pub use perunit::{ComplexPu, PerUnitBase};
pub use simulator::{run_scenario, Event, ScenarioRun, ScenarioSpec, SystemParams, TimeSeries};
