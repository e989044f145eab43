use thiserror::Error;

pub type Result<T, E = GfcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GfcError {
    #[error("grid impedance has zero magnitude")]
    ZeroImpedance,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("steady-state solve did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("controller cannot hold the operating point: {0}")]
    InitInfeasible(String),

    #[error("unknown controller variant '{0}'")]
    UnknownVariant(String),

    #[error("simulation diverged at t = {time:.6} s (state component {index} = {value:e})")]
    Diverged { time: f64, index: usize, value: f64 },

    #[error("initial state is not an equilibrium (derivative norm {norm:.3e})")]
    NotAnEquilibrium { norm: f64 },

    #[error("metric window contains no samples")]
    EmptyWindow,

    #[error("overshoot baseline is degenerate (pre-event value and step both ~0)")]
    DegenerateBaseline,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}
