//! Benchmark single-line network: an ideal converter voltage source behind
//! an RL filter with a shunt capacitor at the PCC, a switchable resistive
//! load at the PCC, and a stiff Thevenin grid.
//!
//! The model is written in a common frame rotating at the nominal angular
//! frequency. Reactances and susceptances are per-unit at that frequency,
//! so for an inductance `x` the state equation reads
//! `(x / omega_n) di/dt = v - r i - j x i`.

use serde::{Deserialize, Serialize};

use crate::error::{GfcError, Result};
use crate::perunit::{complex_power, ComplexPu, PerUnitBase};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    /// Converter-side filter reactance.
    pub l_f: f64,
    /// Shunt filter susceptance.
    pub c_f: f64,
    /// Series resistance of the filter inductor.
    pub r_f: f64,
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.l_f > 0.0 && self.c_f > 0.0 && self.r_f >= 0.0)
            || !(self.l_f.is_finite() && self.c_f.is_finite() && self.r_f.is_finite())
        {
            return Err(GfcError::InvalidParameter(format!(
                "filter requires l_f > 0, c_f > 0, r_f >= 0 (got {self:?})"
            )));
        }
        Ok(())
    }
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            l_f: 0.10,
            c_f: 0.05,
            r_f: 0.005,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub z_grid: ComplexPu,
    /// Magnitude of the stiff source behind the grid impedance.
    pub v_mag: f64,
    /// Source angle in the common frame (rad).
    pub phase: f64,
}

impl GridParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_grid.is_finite() && self.z_grid.norm() > 0.0) {
            return Err(GfcError::ZeroImpedance);
        }
        if !(self.z_grid.re >= 0.0 && self.z_grid.im > 0.0) {
            return Err(GfcError::InvalidParameter(format!(
                "grid impedance needs r >= 0 and x > 0 for the dynamic model (got {:?})",
                self.z_grid
            )));
        }
        if !(self.v_mag.is_finite() && self.v_mag > 0.0) || !self.phase.is_finite() {
            return Err(GfcError::InvalidParameter(format!(
                "grid source must have positive magnitude and finite phase (got {} at {})",
                self.v_mag, self.phase
            )));
        }
        Ok(())
    }

    pub fn source_voltage(&self) -> ComplexPu {
        ComplexPu::from_polar(self.v_mag, self.phase)
    }
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            z_grid: ComplexPu::new(0.1178, 0.5891),
            v_mag: 1.0,
            phase: 0.0,
        }
    }
}

/// Constant-resistance load sized at 1 pu voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadParams {
    pub p_load: f64,
    pub connected: bool,
}

impl LoadParams {
    pub fn new(p_load: f64, connected: bool) -> Result<Self> {
        if !(p_load.is_finite() && p_load >= 0.0) {
            return Err(GfcError::InvalidParameter(format!(
                "load power must be non-negative, got {p_load}"
            )));
        }
        Ok(Self { p_load, connected })
    }

    /// Equivalent resistance `1 / p_load` (infinite for a null load).
    pub fn r_load(&self) -> f64 {
        1.0 / self.p_load
    }

    /// Conductance seen at the PCC in the current switch state.
    pub fn conductance(&self) -> f64 {
        if self.connected {
            self.p_load
        } else {
            0.0
        }
    }

    pub fn current(&self, v_o: ComplexPu) -> ComplexPu {
        v_o * self.conductance()
    }
}

impl Default for LoadParams {
    fn default() -> Self {
        Self {
            p_load: 0.2,
            connected: false,
        }
    }
}

/// Electrical states of the network, all in the common frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkState {
    /// Converter-side inductor current.
    pub i_l: ComplexPu,
    /// Filter capacitor (PCC) voltage.
    pub v_o: ComplexPu,
    /// Current flowing from the PCC into the grid branch.
    pub i_g: ComplexPu,
}

impl NetworkState {
    pub const DIM: usize = 6;

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.i_l.re,
            self.i_l.im,
            self.v_o.re,
            self.v_o.im,
            self.i_g.re,
            self.i_g.im,
        ]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            i_l: ComplexPu { re: x[0], im: x[1] },
            v_o: ComplexPu { re: x[2], im: x[3] },
            i_g: ComplexPu { re: x[4], im: x[5] },
        }
    }

    /// Converter output current into the PCC devices (load and grid).
    pub fn output_current(&self, load: &LoadParams) -> ComplexPu {
        self.i_g + load.current(self.v_o)
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Everything the network equations need besides the state and the
/// converter voltage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkParams {
    pub base: PerUnitBase,
    pub filter: FilterParams,
    pub grid: GridParams,
    pub load: LoadParams,
}

impl NetworkParams {
    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.grid.validate()?;
        LoadParams::new(self.load.p_load, self.load.connected)?;
        Ok(())
    }
}

pub fn network_derivatives(
    state: &NetworkState,
    v_inv: ComplexPu,
    params: &NetworkParams,
) -> NetworkState {
    let w = params.base.omega_n();
    let FilterParams { l_f, c_f, r_f } = params.filter;
    let z_g = params.grid.z_grid;
    let v_src = params.grid.source_voltage();
    let NetworkState { i_l, v_o, i_g } = *state;

    let di_l = (v_inv - v_o - i_l * r_f - (i_l * l_f).mul_j()) * (w / l_f);
    let dv_o = (i_l - params.load.current(v_o) - i_g - (v_o * c_f).mul_j()) * (w / c_f);
    let di_g = (v_o - v_src - i_g * z_g.re - (i_g * z_g.im).mul_j()) * (w / z_g.im);

    NetworkState {
        i_l: di_l,
        v_o: dv_o,
        i_g: di_g,
    }
}

/// Instantaneous power balance of the network, which is zero for any state.
///
/// Terminal power minus resistive losses, rate of change of stored energy,
/// load power and power delivered into the grid source.
pub fn power_balance_residual(
    state: &NetworkState,
    v_inv: ComplexPu,
    params: &NetworkParams,
) -> f64 {
    let w = params.base.omega_n();
    let d = network_derivatives(state, v_inv, params);
    let FilterParams { l_f, c_f, r_f } = params.filter;
    let z_g = params.grid.z_grid;

    let p_terminal = complex_power(v_inv, state.i_l).0;
    let losses = r_f * state.i_l.norm_sqr() + z_g.re * state.i_g.norm_sqr();
    let d_energy = (l_f * (d.i_l * state.i_l.conj()).re
        + c_f * (d.v_o * state.v_o.conj()).re
        + z_g.im * (d.i_g * state.i_g.conj()).re)
        / w;
    let p_load = params.load.conductance() * state.v_o.norm_sqr();
    let p_grid = complex_power(params.grid.source_voltage(), state.i_g).0;

    p_terminal - losses - d_energy - p_load - p_grid
}

/// A consistent sinusoidal steady state of the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub network: NetworkState,
    pub v_inv: ComplexPu,
    /// Active power delivered by the converter at the PCC.
    pub p: f64,
    /// Reactive power delivered by the converter at the PCC.
    pub q: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl OperatingPoint {
    pub fn output_current(&self, load: &LoadParams) -> ComplexPu {
        self.network.output_current(load)
    }
}

const NEWTON_MAX_ITER: usize = 60;
const NEWTON_TOL: f64 = 1e-13;
const ACCEPT_RESIDUAL: f64 = 1e-10;

/// Finds the operating point where the converter delivers `p_target` at the
/// PCC while the PCC voltage magnitude equals `v_target`.
///
/// Newton iteration on the PCC voltage phasor; the remaining phasors follow
/// from the circuit equations with all derivatives zero.
pub fn steady_state_solve(
    params: &NetworkParams,
    p_target: f64,
    v_target: f64,
) -> Result<OperatingPoint> {
    params.validate()?;
    if !(v_target.is_finite() && v_target > 0.0) || !p_target.is_finite() {
        return Err(GfcError::InvalidParameter(format!(
            "targets must be finite with positive voltage (p = {p_target}, v = {v_target})"
        )));
    }
    let y_g = params.grid.z_grid.inv();
    let g_total = y_g.re + params.load.conductance();
    // P(v) = |v|^2 G - Re(v w)
    let w = (params.grid.source_voltage() * y_g).conj();

    let residual_of = |v: ComplexPu| -> [f64; 2] {
        let p = v.norm_sqr() * g_total - (v * w).re;
        [p - p_target, v.norm_sqr() - v_target * v_target]
    };
    let norm2 = |f: [f64; 2]| f[0].hypot(f[1]);

    let mut v = params.grid.source_voltage() * (v_target / params.grid.v_mag);
    let mut f = residual_of(v);
    let mut iterations = 0;
    while iterations < NEWTON_MAX_ITER && norm2(f) > NEWTON_TOL {
        iterations += 1;
        let (x, y) = (v.re, v.im);
        let jac = [
            [2.0 * x * g_total - w.re, 2.0 * y * g_total + w.im],
            [2.0 * x, 2.0 * y],
        ];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det.abs() < 1e-14 || !det.is_finite() {
            break;
        }
        let mut dx = (f[0] * jac[1][1] - f[1] * jac[0][1]) / det;
        let mut dy = (jac[0][0] * f[1] - jac[1][0] * f[0]) / det;
        let step = dx.hypot(dy);
        let max_step = 0.25 * v_target;
        if step > max_step {
            dx *= max_step / step;
            dy *= max_step / step;
        }
        v = ComplexPu::new(x - dx, y - dy);
        f = residual_of(v);
        if !v.is_finite() {
            break;
        }
    }
    let residual = norm2(f);
    if !(residual < ACCEPT_RESIDUAL) {
        return Err(GfcError::NoConvergence {
            iterations,
            residual,
        });
    }

    let network = phasor_state_from_pcc_voltage(v, params);
    let v_inv = network.v_o + network.i_l * params.filter.r_f + (network.i_l * params.filter.l_f).mul_j();
    let (p, q) = complex_power(v, network.output_current(&params.load));
    Ok(OperatingPoint {
        network,
        v_inv,
        p,
        q,
        iterations,
        residual,
    })
}

fn phasor_state_from_pcc_voltage(v_o: ComplexPu, params: &NetworkParams) -> NetworkState {
    let i_g = (v_o - params.grid.source_voltage()) / params.grid.z_grid;
    let i_l = i_g + params.load.current(v_o) + (v_o * params.filter.c_f).mul_j();
    NetworkState { i_l, v_o, i_g }
}

pub fn apply_phase_jump(grid: GridParams, delta: f64) -> GridParams {
    GridParams {
        phase: grid.phase + delta,
        ..grid
    }
}

pub fn apply_load_switch(load: LoadParams, on: bool) -> LoadParams {
    LoadParams {
        connected: on,
        ..load
    }
}
