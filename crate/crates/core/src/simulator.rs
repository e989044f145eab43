//! Fixed-step integration of the closed loop, scenario events, and a
//! finite-difference linearization used as a small-signal oracle.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::controllers::{
    controller_step, frequency_hz, init_controller_state, ControllerSpec, ControllerState, Measurements, PlantInfo,
    Setpoints,
};
use crate::error::{GfcError, Result};
use crate::network::{
    apply_load_switch, apply_phase_jump, network_derivatives, power_balance_residual, steady_state_solve,
    NetworkParams, NetworkState, OperatingPoint,
};
use crate::perunit::{rotate_to_frame, ComplexPu};

/// Total state dimension: network, controller, actuation lag.
pub const STATE_DIM: usize = NetworkState::DIM + ControllerState::DIM + 2;
const CTRL_OFFSET: usize = NetworkState::DIM;
const LAG_OFFSET: usize = NetworkState::DIM + ControllerState::DIM;

pub type StateVector = SVector<f64, STATE_DIM>;

/// Largest admissible integration step (s).
pub const MAX_DT: f64 = 2e-4;
pub const DEFAULT_DT: f64 = 5e-5;
pub const DIVERGENCE_LIMIT: f64 = 1e6;
/// Largest derivative norm accepted as an equilibrium.
pub const EQUILIBRIUM_TOL: f64 = 1e-6;

/// The physical benchmark and its operating targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub network: NetworkParams,
    /// Converter active power at the PCC before the event (pu).
    pub p_target: f64,
    /// PCC voltage magnitude before the event (pu).
    pub v_target: f64,
    /// First-order converter actuation lag (s); zero means ideal.
    pub actuation_lag: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            network: NetworkParams::default(),
            p_target: 1.0,
            v_target: 1.0,
            actuation_lag: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Event {
    None,
    /// Connect the PCC load sized at `p_load`.
    LoadStep { p_load: f64 },
    /// Advance the grid source angle by `delta` rad.
    PhaseJump { delta: f64 },
    /// Add `dp` to the active power reference.
    SetpointStep { dp: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub duration: f64,
    pub dt: f64,
    pub event_time: f64,
    pub event: Event,
    pub controller: ControllerSpec,
    pub system: SystemParams,
    /// Record every n-th step.
    pub decimation: usize,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GfcError::InvalidScenario(m));
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return bad(format!("dt must be in (0, {MAX_DT}] s, got {}", self.dt));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.event_time > 0.0 && self.event_time < self.duration) {
            return bad(format!(
                "event time {} outside (0, {})",
                self.event_time, self.duration
            ));
        }
        if self.decimation == 0 {
            return bad("decimation must be at least 1".into());
        }
        if !(self.system.actuation_lag >= 0.0 && self.system.actuation_lag.is_finite()) {
            return bad(format!("actuation lag must be >= 0, got {}", self.system.actuation_lag));
        }
        match self.event {
            Event::LoadStep { p_load } if !(p_load >= 0.0 && p_load.is_finite()) => {
                return bad(format!("load step must be non-negative, got {p_load}"))
            }
            Event::PhaseJump { delta } if !delta.is_finite() => return bad("phase jump must be finite".into()),
            Event::SetpointStep { dp } if !dp.is_finite() => return bad("setpoint step must be finite".into()),
            _ => {}
        }
        self.system.network.validate()?;
        self.controller.validate()
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Step index at which the event is applied.
    pub fn event_step(&self) -> usize {
        (self.event_time / self.dt).round() as usize
    }
}

/// Concatenated network, controller and actuator state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub x: StateVector,
    pub t: f64,
}

impl SimState {
    pub fn network(&self) -> NetworkState {
        NetworkState::from_slice(&self.x.as_slice()[..CTRL_OFFSET])
    }

    pub fn controller(&self) -> ControllerState {
        ControllerState::from_slice(&self.x.as_slice()[CTRL_OFFSET..LAG_OFFSET])
    }

    pub fn actuator(&self) -> ComplexPu {
        ComplexPu {
            re: self.x[LAG_OFFSET],
            im: self.x[LAG_OFFSET + 1],
        }
    }

    pub fn assemble(network: &NetworkState, controller: &ControllerState, actuator: ComplexPu, t: f64) -> Self {
        let mut x = StateVector::zeros();
        x.as_mut_slice()[..CTRL_OFFSET].copy_from_slice(&network.to_array());
        x.as_mut_slice()[CTRL_OFFSET..LAG_OFFSET].copy_from_slice(&controller.to_array());
        x[LAG_OFFSET] = actuator.re;
        x[LAG_OFFSET + 1] = actuator.im;
        Self { x, t }
    }
}

/// Mutable-by-event parameters of one closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedLoop {
    pub controller: ControllerSpec,
    pub setpoints: Setpoints,
    pub network: NetworkParams,
    pub actuation_lag: f64,
}

/// Signals derived from a state, besides its time derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outputs {
    pub meas: Measurements,
    pub omega: f64,
    pub v_applied: ComplexPu,
    pub voltage_error: ComplexPu,
    pub theta: f64,
}

impl ClosedLoop {
    pub fn evaluate(&self, x: &StateVector) -> (StateVector, Outputs) {
        let s = SimState { x: *x, t: 0.0 };
        let net = s.network();
        let ctrl = s.controller();
        let meas = Measurements::new(net.v_o, net.i_l, net.output_current(&self.network.load));
        let plant = PlantInfo::from(&self.network);
        let out = controller_step(&self.controller, &meas, &ctrl, &self.setpoints, &plant);

        let (v_applied, d_act) = if self.actuation_lag > 0.0 {
            let v_act = s.actuator();
            (v_act, (out.v_inv - v_act) / self.actuation_lag)
        } else {
            (out.v_inv, ComplexPu::ZERO)
        };
        let d_net = network_derivatives(&net, v_applied, &self.network);
        let dx = SimState::assemble(&d_net, &out.derivatives, d_act, 0.0).x;
        (
            dx,
            Outputs {
                meas,
                omega: out.omega,
                v_applied,
                voltage_error: out.voltage_error,
                theta: ctrl.theta,
            },
        )
    }

    pub fn derivatives(&self, x: &StateVector) -> StateVector {
        self.evaluate(x).0
    }

    /// State indices integrated by this configuration.
    pub fn active_indices(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..NetworkState::DIM).collect();
        idx.extend(
            ControllerState::active_indices(self.controller.variant())
                .iter()
                .map(|i| i + CTRL_OFFSET),
        );
        if self.actuation_lag > 0.0 {
            idx.extend([LAG_OFFSET, LAG_OFFSET + 1]);
        }
        idx
    }

    fn apply_event(&mut self, event: &Event) {
        match *event {
            Event::None => {}
            Event::LoadStep { p_load } => {
                self.network.load.p_load = p_load;
                self.network.load = apply_load_switch(self.network.load, true);
            }
            Event::PhaseJump { delta } => self.network.grid = apply_phase_jump(self.network.grid, delta),
            Event::SetpointStep { dp } => self.setpoints.p_ref += dp,
        }
    }
}

/// Classical fourth-order Runge-Kutta step.
///
/// Fails with [`GfcError::Diverged`] when any component of the result is
/// non-finite or exceeds [`DIVERGENCE_LIMIT`] in magnitude.
pub fn rk4_step<const N: usize, F>(x: &SVector<f64, N>, t: f64, dt: f64, mut f: F) -> Result<SVector<f64, N>>
where
    F: FnMut(f64, &SVector<f64, N>) -> SVector<f64, N>,
{
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * dt, &(x + k1 * (0.5 * dt)));
    let k3 = f(t + 0.5 * dt, &(x + k2 * (0.5 * dt)));
    let k4 = f(t + dt, &(x + k3 * dt));
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if let Some((index, value)) = next
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT)
    {
        return Err(GfcError::Diverged {
            time: t + dt,
            index,
            value: *value,
        });
    }
    Ok(next)
}

/// Uniformly sampled output channels.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimeSeries {
    /// Sample spacing (s).
    pub dt: f64,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Controller frequency (Hz).
    pub f_ctrl: Vec<f64>,
    /// PCC voltage in the controller frame.
    pub v_od: Vec<f64>,
    pub v_oq: Vec<f64>,
    pub v_mag: Vec<f64>,
    /// Converter output current in the controller frame.
    pub i_od: Vec<f64>,
    pub i_oq: Vec<f64>,
    pub i_mag: Vec<f64>,
    /// Voltage tracking error in the common frame.
    pub v_err_re: Vec<f64>,
    pub v_err_im: Vec<f64>,
}

impl TimeSeries {
    /// Names of the exported channels, in export order.
    pub const CHANNELS: [&'static str; 10] = ["t", "p", "q", "f_ctrl", "v_od", "v_oq", "v_mag", "i_od", "i_oq", "i_mag"];

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        Some(match name {
            "t" => &self.t,
            "p" => &self.p,
            "q" => &self.q,
            "f_ctrl" => &self.f_ctrl,
            "v_od" => &self.v_od,
            "v_oq" => &self.v_oq,
            "v_mag" => &self.v_mag,
            "i_od" => &self.i_od,
            "i_oq" => &self.i_oq,
            "i_mag" => &self.i_mag,
            "v_err_re" => &self.v_err_re,
            "v_err_im" => &self.v_err_im,
            _ => return None,
        })
    }

    fn push(&mut self, t: f64, o: &Outputs) {
        let v = rotate_to_frame(o.meas.v_o, o.theta);
        let i = rotate_to_frame(o.meas.i_o, o.theta);
        self.t.push(t);
        self.p.push(o.meas.p);
        self.q.push(o.meas.q);
        self.f_ctrl.push(frequency_hz(o.omega));
        self.v_od.push(v.re);
        self.v_oq.push(v.im);
        self.v_mag.push(o.meas.v_o.norm());
        self.i_od.push(i.re);
        self.i_oq.push(i.im);
        self.i_mag.push(o.meas.i_o.norm());
        self.v_err_re.push(o.voltage_error.re);
        self.v_err_im.push(o.voltage_error.im);
    }

    /// Keeps every `factor`-th sample.
    pub fn decimate(&self, factor: usize) -> TimeSeries {
        let pick = |v: &Vec<f64>| v.iter().step_by(factor.max(1)).copied().collect::<Vec<_>>();
        TimeSeries {
            dt: self.dt * factor as f64,
            t: pick(&self.t),
            p: pick(&self.p),
            q: pick(&self.q),
            f_ctrl: pick(&self.f_ctrl),
            v_od: pick(&self.v_od),
            v_oq: pick(&self.v_oq),
            v_mag: pick(&self.v_mag),
            i_od: pick(&self.i_od),
            i_oq: pick(&self.i_oq),
            i_mag: pick(&self.i_mag),
            v_err_re: pick(&self.v_err_re),
            v_err_im: pick(&self.v_err_im),
        }
    }
}

/// Equilibrium the scenario starts from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Initialization {
    pub operating_point: OperatingPoint,
    pub setpoints: Setpoints,
    pub state: SimState,
    pub closed_loop: ClosedLoop,
    /// Norm of the active state derivatives at the initial state.
    pub derivative_norm: f64,
}

pub fn initialize(spec: &ScenarioSpec) -> Result<Initialization> {
    spec.validate()?;
    let mut network = spec.system.network;
    network.load.connected = false;
    let op = steady_state_solve(&network, spec.system.p_target, spec.system.v_target)?;
    let init = init_controller_state(&spec.controller, &op, &network)?;
    let state = SimState::assemble(&op.network, &init.state, op.v_inv, 0.0);
    let closed_loop = ClosedLoop {
        controller: spec.controller,
        setpoints: init.setpoints,
        network,
        actuation_lag: spec.system.actuation_lag,
    };
    let derivative_norm = closed_loop.derivatives(&state.x).norm();
    Ok(Initialization {
        operating_point: op,
        setpoints: init.setpoints,
        state,
        closed_loop,
        derivative_norm,
    })
}

/// Outcome of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub series: TimeSeries,
    pub operating_point: OperatingPoint,
    pub setpoints: Setpoints,
    pub initial_state: SimState,
    pub final_state: SimState,
    pub pre_event_derivative_norm: f64,
    /// Largest network power-balance residual over all recorded samples.
    pub max_power_balance_residual: f64,
    /// Time at which the event was applied (snapped to a step boundary).
    pub event_time: f64,
}

pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioRun> {
    let init = initialize(spec)?;
    if !(init.derivative_norm < EQUILIBRIUM_TOL) {
        return Err(GfcError::NotAnEquilibrium {
            norm: init.derivative_norm,
        });
    }
    let mut closed_loop = init.closed_loop;
    let n_steps = spec.steps();
    let event_step = spec.event_step();
    let dt = spec.dt;
    let mut x = init.state.x;
    let mut series = TimeSeries {
        dt: dt * spec.decimation as f64,
        ..Default::default()
    };
    let mut max_residual: f64 = 0.0;

    for k in 0..=n_steps {
        let t = k as f64 * dt;
        if k == event_step {
            closed_loop.apply_event(&spec.event);
        }
        if k % spec.decimation == 0 {
            let (_, out) = closed_loop.evaluate(&x);
            let s = SimState { x, t };
            let residual = power_balance_residual(&s.network(), out.v_applied, &closed_loop.network);
            max_residual = max_residual.max(residual.abs());
            series.push(t, &out);
        }
        if k == n_steps {
            break;
        }
        let cl = closed_loop;
        x = rk4_step(&x, t, dt, |_, x| cl.derivatives(x))?;
    }

    Ok(ScenarioRun {
        series,
        operating_point: init.operating_point,
        setpoints: init.setpoints,
        initial_state: init.state,
        final_state: SimState {
            x,
            t: n_steps as f64 * dt,
        },
        pre_event_derivative_norm: init.derivative_norm,
        max_power_balance_residual: max_residual,
        event_time: event_step as f64 * dt,
    })
}

/// Runs independent scenarios on scoped threads, preserving input order.
pub fn run_matrix(specs: &[ScenarioSpec]) -> Vec<Result<ScenarioRun>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = specs
            .iter()
            .map(|spec| scope.spawn(move || run_scenario(spec)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect()
    })
}

pub const JACOBIAN_STEP: f64 = 1e-6;
pub const RICHARDSON_STEP: f64 = 1e-5;

/// A small-signal model restricted to the active states.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub a: DMatrix<f64>,
    /// Global indices of the rows/columns of `a`.
    pub indices: Vec<usize>,
    /// Largest entry-wise difference between the Jacobians taken with the
    /// two perturbation sizes, relative to the largest entry.
    pub richardson_discrepancy: f64,
}

fn jacobian_columns(
    f: &dyn Fn(&StateVector) -> StateVector,
    x0: &StateVector,
    indices: &[usize],
    h: f64,
) -> DMatrix<f64> {
    let n = indices.len();
    let mut a = DMatrix::zeros(n, n);
    for (col, &j) in indices.iter().enumerate() {
        let mut xp = *x0;
        let mut xm = *x0;
        xp[j] += h;
        xm[j] -= h;
        let d = (f(&xp) - f(&xm)) / (2.0 * h);
        for (row, &i) in indices.iter().enumerate() {
            a[(row, col)] = d[i];
        }
    }
    a
}

/// Central-difference Jacobian of the closed loop at an equilibrium.
pub fn linearize(closed_loop: &ClosedLoop, op: &SimState) -> Result<Linearization> {
    let norm = closed_loop.derivatives(&op.x).norm();
    if !(norm < EQUILIBRIUM_TOL) {
        return Err(GfcError::NotAnEquilibrium { norm });
    }
    let indices = closed_loop.active_indices();
    let f = |x: &StateVector| closed_loop.derivatives(x);
    let a = jacobian_columns(&f, &op.x, &indices, JACOBIAN_STEP);
    let coarse = jacobian_columns(&f, &op.x, &indices, RICHARDSON_STEP);
    let scale = a.amax().max(1.0);
    let richardson_discrepancy = (&a - &coarse).amax() / scale;
    Ok(Linearization {
        a,
        indices,
        richardson_discrepancy,
    })
}

/// Linearizes the scenario's initial equilibrium.
pub fn linearize_scenario(spec: &ScenarioSpec) -> Result<Linearization> {
    let init = initialize(spec)?;
    linearize(&init.closed_loop, &init.state)
}

/// Linearizes the network alone with the converter voltage held at `v_inv`.
pub fn linearize_network(params: &NetworkParams, state: &NetworkState, v_inv: ComplexPu) -> Result<Linearization> {
    let f = |x: &StateVector| {
        let net = NetworkState::from_slice(&x.as_slice()[..NetworkState::DIM]);
        let d = network_derivatives(&net, v_inv, params);
        let mut dx = StateVector::zeros();
        dx.as_mut_slice()[..NetworkState::DIM].copy_from_slice(&d.to_array());
        dx
    };
    let mut x0 = StateVector::zeros();
    x0.as_mut_slice()[..NetworkState::DIM].copy_from_slice(&state.to_array());
    let norm = f(&x0).norm();
    if !(norm < EQUILIBRIUM_TOL) {
        return Err(GfcError::NotAnEquilibrium { norm });
    }
    let indices: Vec<usize> = (0..NetworkState::DIM).collect();
    let a = jacobian_columns(&f, &x0, &indices, JACOBIAN_STEP);
    let coarse = jacobian_columns(&f, &x0, &indices, RICHARDSON_STEP);
    let richardson_discrepancy = (&a - &coarse).amax() / a.amax().max(1.0);
    Ok(Linearization {
        a,
        indices,
        richardson_discrepancy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub eigenvalue: Complex64,
    /// `|A v - λ v| / |v|` for the computed eigenvector.
    pub residual: f64,
}

impl Mode {
    pub fn damping_ratio(&self) -> f64 {
        let mag = self.eigenvalue.norm();
        if mag == 0.0 {
            1.0
        } else {
            -self.eigenvalue.re / mag
        }
    }

    pub fn frequency_hz(&self) -> f64 {
        self.eigenvalue.im.abs() / (2.0 * PI)
    }

    pub fn is_oscillatory(&self) -> bool {
        self.eigenvalue.im.abs() > 1e-6 * self.eigenvalue.norm().max(1.0)
    }
}

impl Linearization {
    /// Eigenvalues with eigenvector residuals, sorted by decreasing real part.
    pub fn modes(&self) -> Vec<Mode> {
        let eig = self.a.complex_eigenvalues();
        let n = self.a.nrows();
        let ac: DMatrix<Complex64> = self.a.map(|v| Complex64::new(v, 0.0));
        let mut modes: Vec<Mode> = eig
            .iter()
            .map(|&lambda| {
                let shifted = &ac - DMatrix::<Complex64>::identity(n, n) * lambda;
                let svd = shifted.svd(false, true);
                let v_t = svd.v_t.expect("requested right singular vectors");
                let (k, _) = svd
                    .singular_values
                    .iter()
                    .enumerate()
                    .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
                let v: DVector<Complex64> = v_t.row(k).adjoint();
                let r = (&ac * &v - &v * lambda).norm() / v.norm();
                Mode {
                    eigenvalue: lambda,
                    residual: r,
                }
            })
            .collect();
        modes.sort_by(|a, b| b.eigenvalue.re.total_cmp(&a.eigenvalue.re).then(b.eigenvalue.im.total_cmp(&a.eigenvalue.im)));
        modes
    }

    pub fn is_stable(&self) -> bool {
        self.modes().iter().all(|m| m.eigenvalue.re < 0.0)
    }
}

/// The least-damped oscillatory mode (upper half-plane representative).
pub fn least_damped_oscillatory(modes: &[Mode]) -> Option<Mode> {
    modes
        .iter()
        .filter(|m| m.is_oscillatory() && m.eigenvalue.im > 0.0)
        .copied()
        .min_by(|a, b| a.damping_ratio().total_cmp(&b.damping_ratio()))
}

/// Comparison of the nonlinear and linearized responses to a step in the
/// active power reference.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallSignalReport {
    pub perturbation: f64,
    pub horizon: f64,
    /// RMS of (nonlinear - linear) over RMS of the linear response, for the
    /// active power.
    pub p_deviation: f64,
    /// Same measure for the controller frequency.
    pub f_deviation: f64,
    pub stable: bool,
}

impl SmallSignalReport {
    pub fn max_deviation(&self) -> f64 {
        self.p_deviation.max(self.f_deviation)
    }
}

pub const SMALL_SIGNAL_HORIZON: f64 = 0.5;

/// Cross-validates the linearized model against the nonlinear closed loop
/// for a step of `perturbation` pu on the active power reference.
pub fn small_signal_oracle(spec: &ScenarioSpec, perturbation: f64) -> Result<SmallSignalReport> {
    let init = initialize(spec)?;
    let lin = linearize(&init.closed_loop, &init.state)?;
    let base = init.closed_loop;
    let x0 = init.state.x;
    let idx = &lin.indices;
    let n = idx.len();

    // input and output maps by central differences
    let with_dp = |dp: f64| {
        let mut cl = base;
        cl.setpoints.p_ref += dp;
        cl
    };
    let h = JACOBIAN_STEP;
    let b_full = (with_dp(h).derivatives(&x0) - with_dp(-h).derivatives(&x0)) / (2.0 * h);
    let b = DVector::from_iterator(n, idx.iter().map(|&i| b_full[i]));

    let outputs = |cl: &ClosedLoop, x: &StateVector| {
        let (_, o) = cl.evaluate(x);
        [o.meas.p, frequency_hz(o.omega)]
    };
    let y0 = outputs(&base, &x0);
    let mut c = DMatrix::zeros(2, n);
    let mut d = [0.0; 2];
    for (col, &j) in idx.iter().enumerate() {
        let mut xp = x0;
        let mut xm = x0;
        xp[j] += h;
        xm[j] -= h;
        let (yp, ym) = (outputs(&base, &xp), outputs(&base, &xm));
        for r in 0..2 {
            c[(r, col)] = (yp[r] - ym[r]) / (2.0 * h);
        }
    }
    let (yp, ym) = (outputs(&with_dp(h), &x0), outputs(&with_dp(-h), &x0));
    for r in 0..2 {
        d[r] = (yp[r] - ym[r]) / (2.0 * h);
    }

    let dt = spec.dt;
    let steps = (SMALL_SIGNAL_HORIZON / dt).round() as usize;
    let perturbed = with_dp(perturbation);
    let a = &lin.a;
    let mut x = x0;
    let mut dx = DVector::<f64>::zeros(n);
    let mut err2 = [0.0; 2];
    let mut lin2 = [0.0; 2];
    for k in 0..=steps {
        let y_nl = outputs(&perturbed, &x);
        let y_lin = &c * &dx;
        for r in 0..2 {
            let dy_nl = y_nl[r] - y0[r];
            let dy_lin = y_lin[r] + d[r] * perturbation;
            err2[r] += (dy_nl - dy_lin).powi(2);
            lin2[r] += dy_lin.powi(2);
        }
        if k == steps {
            break;
        }
        let t = k as f64 * dt;
        x = rk4_step(&x, t, dt, |_, x| perturbed.derivatives(x))?;
        dx = rk4_dyn(&dx, dt, |v| a * v + &b * perturbation);
    }
    let rel = |r: usize| {
        if lin2[r] == 0.0 {
            if err2[r] == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (err2[r] / lin2[r]).sqrt()
        }
    };
    Ok(SmallSignalReport {
        perturbation,
        horizon: SMALL_SIGNAL_HORIZON,
        p_deviation: rel(0),
        f_deviation: rel(1),
        stable: lin.is_stable(),
    })
}

fn rk4_dyn(x: &DVector<f64>, dt: f64, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> DVector<f64> {
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (0.5 * dt)));
    let k3 = f(&(x + &k2 * (0.5 * dt)));
    let k4 = f(&(x + &k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}
