//! Grid-forming controllers.
//!
//! Every variant maps PCC measurements and setpoints to a converter voltage
//! command in the common frame. Internal states are kept in a fixed layout
//! ([`ControllerState`]); each variant integrates only the fields it uses.
//!
//! The synchronization angle is stored relative to the common frame, which
//! itself rotates at the nominal frequency: the absolute controller angle is
//! `omega_n * t + theta`. It is never wrapped.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GfcError, Result};
use crate::network::{FilterParams, NetworkParams, OperatingPoint};
use crate::perunit::{complex_power, rotate_from_frame, rotate_to_frame, ComplexPu, PerUnitBase};

/// Stable identifiers of the five controller variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ControllerVariant {
    #[serde(rename = "droop")]
    Droop,
    #[serde(rename = "vsm-outer")]
    VsmOuter,
    #[serde(rename = "vsm-inner")]
    VsmInner,
    #[serde(rename = "vadm")]
    VirtualAdmittance,
    #[serde(rename = "pr")]
    ProportionalResonant,
}

impl ControllerVariant {
    pub const ALL: [ControllerVariant; 5] = [
        ControllerVariant::Droop,
        ControllerVariant::VsmOuter,
        ControllerVariant::VsmInner,
        ControllerVariant::VirtualAdmittance,
        ControllerVariant::ProportionalResonant,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ControllerVariant::Droop => "droop",
            ControllerVariant::VsmOuter => "vsm-outer",
            ControllerVariant::VsmInner => "vsm-inner",
            ControllerVariant::VirtualAdmittance => "vadm",
            ControllerVariant::ProportionalResonant => "pr",
        }
    }
}

impl fmt::Display for ControllerVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ControllerVariant {
    type Err = GfcError;

    fn from_str(s: &str) -> Result<Self> {
        ControllerVariant::ALL
            .into_iter()
            .find(|v| v.id() == s)
            .ok_or_else(|| GfcError::UnknownVariant(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setpoints {
    pub p_ref: f64,
    pub q_ref: f64,
    pub v_ref: f64,
}

impl Setpoints {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_ref.is_finite() && self.v_ref > 0.0)
            || !self.p_ref.is_finite()
            || !self.q_ref.is_finite()
        {
            return Err(GfcError::InvalidParameter(format!(
                "setpoints must be finite with v_ref > 0 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Sign applied to the reactive power error in the voltage reference law.
///
/// `AsPrinted` realizes `V* - K_q (Q* - Q)`; `Flipped` realizes
/// `V* + K_q (Q* - Q)`, the conventional Q-V droop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReactiveDroopSign {
    #[default]
    AsPrinted,
    Flipped,
}

impl ReactiveDroopSign {
    fn factor(self) -> f64 {
        match self {
            ReactiveDroopSign::AsPrinted => -1.0,
            ReactiveDroopSign::Flipped => 1.0,
        }
    }
}

/// Voltage magnitude reference from the reactive power loop.
pub fn reactive_voltage_reference(sp: &Setpoints, q_meas: f64, k_q: f64, sign: ReactiveDroopSign) -> f64 {
    sp.v_ref + sign.factor() * k_q * (sp.q_ref - q_meas)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroopGains {
    /// Active power droop (rad/s per pu).
    pub k_p: f64,
    /// Reactive power droop (pu voltage per pu reactive power).
    pub k_q: f64,
    #[serde(default)]
    pub q_sign: ReactiveDroopSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VsmGains {
    /// Virtual inertia (pu power per rad/s^2).
    pub j_inertia: f64,
    /// Damping (pu power per rad/s).
    pub d_p: f64,
    pub k_q: f64,
    #[serde(default)]
    pub q_sign: ReactiveDroopSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerLoopGains {
    pub k_pv: f64,
    pub k_iv: f64,
    pub k_pc: f64,
    pub k_ic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualAdmittanceParams {
    /// Virtual inductance (pu reactance).
    pub l_v: f64,
    /// Virtual resistance (pu).
    pub r_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrGains {
    pub k_p_ab: f64,
    /// Resonant gain (1/s).
    pub k_r_ab: f64,
    /// Resonant frequency (rad/s).
    pub omega_res: f64,
    /// Resonator damping (rad/s); zero gives the ideal resonator.
    #[serde(default)]
    pub omega_c: f64,
    /// Proportional current loop gain.
    pub k_i_ab: f64,
    /// Virtual resistance used in the voltage reference.
    pub r_virt: f64,
}

/// A controller variant together with its gain set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum ControllerSpec {
    Droop {
        droop: DroopGains,
        inner: InnerLoopGains,
    },
    VsmOuter {
        vsm: VsmGains,
    },
    VsmInner {
        vsm: VsmGains,
        inner: InnerLoopGains,
    },
    #[serde(rename = "vadm")]
    VirtualAdmittance {
        vsm: VsmGains,
        admittance: VirtualAdmittanceParams,
        /// Only the current loop gains (`k_pc`, `k_ic`) are used.
        inner: InnerLoopGains,
    },
    #[serde(rename = "pr")]
    ProportionalResonant {
        vsm: VsmGains,
        pr: PrGains,
    },
}

/// Default gain sets shared by all variants.
///
/// The outer loops are matched: every swing-equation variant uses the same
/// inertia, damping and reactive droop, and the damping equals `1/K_p` of
/// the droop controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    pub droop: DroopGains,
    pub vsm: VsmGains,
    pub inner: InnerLoopGains,
    pub admittance: VirtualAdmittanceParams,
    pub admittance_current: InnerLoopGains,
    pub pr: PrGains,
}

impl GainSet {
    pub fn defaults(base: &PerUnitBase) -> Self {
        let k_p = 0.01 * base.omega_n();
        let k_q = 0.002;
        GainSet {
            droop: DroopGains {
                k_p,
                k_q,
                q_sign: ReactiveDroopSign::AsPrinted,
            },
            vsm: VsmGains {
                j_inertia: 0.02,
                d_p: 1.0 / k_p,
                k_q,
                q_sign: ReactiveDroopSign::AsPrinted,
            },
            inner: InnerLoopGains {
                k_pv: 2.0,
                k_iv: 400.0,
                k_pc: 0.8,
                k_ic: 8.0,
            },
            admittance: VirtualAdmittanceParams { l_v: 1.0, r_v: 2.0 },
            admittance_current: InnerLoopGains {
                k_pv: 0.0,
                k_iv: 0.0,
                k_pc: 0.8,
                k_ic: 8.0,
            },
            pr: PrGains {
                k_p_ab: 1.0,
                k_r_ab: 200.0,
                omega_res: base.omega_n(),
                omega_c: 0.0,
                k_i_ab: 0.8,
                r_virt: 0.02,
            },
        }
    }

    pub fn spec(&self, variant: ControllerVariant) -> ControllerSpec {
        match variant {
            ControllerVariant::Droop => ControllerSpec::Droop {
                droop: self.droop,
                inner: self.inner,
            },
            ControllerVariant::VsmOuter => ControllerSpec::VsmOuter { vsm: self.vsm },
            ControllerVariant::VsmInner => ControllerSpec::VsmInner {
                vsm: self.vsm,
                inner: self.inner,
            },
            ControllerVariant::VirtualAdmittance => ControllerSpec::VirtualAdmittance {
                vsm: self.vsm,
                admittance: self.admittance,
                inner: self.admittance_current,
            },
            ControllerVariant::ProportionalResonant => ControllerSpec::ProportionalResonant {
                vsm: self.vsm,
                pr: self.pr,
            },
        }
    }
}

impl ControllerSpec {
    pub fn variant(&self) -> ControllerVariant {
        match self {
            ControllerSpec::Droop { .. } => ControllerVariant::Droop,
            ControllerSpec::VsmOuter { .. } => ControllerVariant::VsmOuter,
            ControllerSpec::VsmInner { .. } => ControllerVariant::VsmInner,
            ControllerSpec::VirtualAdmittance { .. } => ControllerVariant::VirtualAdmittance,
            ControllerSpec::ProportionalResonant { .. } => ControllerVariant::ProportionalResonant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GfcError::InvalidParameter(msg));
        let check_vsm = |g: &VsmGains| {
            if !(g.j_inertia > 0.0 && g.d_p > 0.0 && g.k_q >= 0.0) {
                return bad(format!("VSM gains need J > 0, D_p > 0, K_q >= 0 (got {g:?})"));
            }
            Ok(())
        };
        let check_inner = |g: &InnerLoopGains| {
            if [g.k_pv, g.k_iv, g.k_pc, g.k_ic].iter().any(|k| !(*k >= 0.0 && k.is_finite())) {
                return bad(format!("inner loop gains must be non-negative (got {g:?})"));
            }
            Ok(())
        };
        match self {
            ControllerSpec::Droop { droop, inner } => {
                if !(droop.k_p > 0.0 && droop.k_q >= 0.0) {
                    return bad(format!("droop gains need K_p > 0, K_q >= 0 (got {droop:?})"));
                }
                check_inner(inner)
            }
            ControllerSpec::VsmOuter { vsm } => check_vsm(vsm),
            ControllerSpec::VsmInner { vsm, inner } => {
                check_vsm(vsm)?;
                check_inner(inner)
            }
            ControllerSpec::VirtualAdmittance {
                vsm,
                admittance,
                inner,
            } => {
                check_vsm(vsm)?;
                check_inner(inner)?;
                if !(admittance.l_v > 0.0 && admittance.r_v >= 0.0) {
                    return bad(format!("virtual admittance needs l_v > 0, r_v >= 0 (got {admittance:?})"));
                }
                Ok(())
            }
            ControllerSpec::ProportionalResonant { vsm, pr } => {
                check_vsm(vsm)?;
                if !(pr.k_r_ab >= 0.0 && pr.omega_res > 0.0 && pr.omega_c >= 0.0 && pr.omega_c < pr.omega_res) {
                    return bad(format!("PR gains need K_r >= 0, 0 <= omega_c < omega_res (got {pr:?})"));
                }
                Ok(())
            }
        }
    }
}

/// Rotating-frame states of the αβ resonators.
///
/// The per-axis resonator `s K_r / (s^2 + 2 w_c s + w_r^2)` applied to the
/// complex signal `alpha + j beta` splits into a positive- and a
/// negative-sequence first-order mode. Expressed in the common frame these
/// modes are constant in sinusoidal steady state, which is what lets the
/// closed loop have a true equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PrState {
    pub positive: ComplexPu,
    pub negative: ComplexPu,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerState {
    /// Controller angle relative to the common frame (rad).
    pub theta: f64,
    /// Swing-equation frequency deviation (rad/s).
    pub omega_dev: f64,
    pub v_pi: ComplexPu,
    pub c_pi: ComplexPu,
    pub y_virt: ComplexPu,
    pub pr: PrState,
}

impl ControllerState {
    pub const DIM: usize = 12;

    pub fn to_array(&self) -> [f64; 12] {
        [
            self.theta,
            self.omega_dev,
            self.v_pi.re,
            self.v_pi.im,
            self.c_pi.re,
            self.c_pi.im,
            self.y_virt.re,
            self.y_virt.im,
            self.pr.positive.re,
            self.pr.positive.im,
            self.pr.negative.re,
            self.pr.negative.im,
        ]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        let c = |i: usize| ComplexPu { re: x[i], im: x[i + 1] };
        Self {
            theta: x[0],
            omega_dev: x[1],
            v_pi: c(2),
            c_pi: c(4),
            y_virt: c(6),
            pr: PrState {
                positive: c(8),
                negative: c(10),
            },
        }
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Indices (into [`ControllerState::to_array`]) integrated by a variant.
    pub fn active_indices(variant: ControllerVariant) -> &'static [usize] {
        match variant {
            ControllerVariant::Droop => &[0, 2, 3, 4, 5],
            ControllerVariant::VsmOuter => &[0, 1],
            ControllerVariant::VsmInner => &[0, 1, 2, 3, 4, 5],
            ControllerVariant::VirtualAdmittance => &[0, 1, 4, 5, 6, 7],
            ControllerVariant::ProportionalResonant => &[0, 1, 8, 9, 10, 11],
        }
    }
}

/// PCC measurements in the common frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Measurements {
    pub v_o: ComplexPu,
    pub i_l: ComplexPu,
    pub i_o: ComplexPu,
    pub p: f64,
    pub q: f64,
}

impl Measurements {
    pub fn new(v_o: ComplexPu, i_l: ComplexPu, i_o: ComplexPu) -> Self {
        let (p, q) = complex_power(v_o, i_o);
        Self { v_o, i_l, i_o, p, q }
    }
}

/// Plant data the inner loops use for decoupling and time scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantInfo {
    pub base: PerUnitBase,
    pub filter: FilterParams,
}

impl From<&NetworkParams> for PlantInfo {
    fn from(p: &NetworkParams) -> Self {
        Self {
            base: p.base,
            filter: p.filter,
        }
    }
}

/// Frequency and voltage references of the droop power loop.
pub fn droop_power_loop(
    sp: &Setpoints,
    p_meas: f64,
    q_meas: f64,
    g: &DroopGains,
    base: &PerUnitBase,
) -> (f64, f64, f64) {
    let omega = base.omega_n() + g.k_p * (sp.p_ref - p_meas);
    let v_od_ref = reactive_voltage_reference(sp, q_meas, g.k_q, g.q_sign);
    (omega, v_od_ref, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VsmOutput {
    pub d_omega_dev: f64,
    pub omega: f64,
    pub v_od_ref: f64,
}

/// Swing-equation power loop: `J dw/dt = (P* - P) - D_p w`.
pub fn vsm_power_loop(
    sp: &Setpoints,
    p_meas: f64,
    q_meas: f64,
    omega_dev: f64,
    g: &VsmGains,
    base: &PerUnitBase,
) -> VsmOutput {
    VsmOutput {
        d_omega_dev: ((sp.p_ref - p_meas) - g.d_p * omega_dev) / g.j_inertia,
        omega: base.omega_n() + omega_dev,
        v_od_ref: reactive_voltage_reference(sp, q_meas, g.k_q, g.q_sign),
    }
}

/// PI voltage loop with output-current feed-forward and capacitor
/// decoupling. The integrator state holds `∫ k_iv e dt`.
pub fn voltage_pi_loop(
    v_ref: ComplexPu,
    v_meas: ComplexPu,
    i_o: ComplexPu,
    integrator: ComplexPu,
    g: &InnerLoopGains,
    c_f: f64,
) -> (ComplexPu, ComplexPu) {
    let e = v_ref - v_meas;
    let i_l_ref = i_o + e * g.k_pv + integrator + (v_meas * c_f).mul_j();
    (i_l_ref, e * g.k_iv)
}

/// PI current loop with capacitor-voltage feed-forward and inductor
/// decoupling. The integrator state holds `∫ k_ic e dt`.
pub fn current_pi_loop(
    i_l_ref: ComplexPu,
    i_l_meas: ComplexPu,
    v_ff: ComplexPu,
    integrator: ComplexPu,
    g: &InnerLoopGains,
    l_f: f64,
) -> (ComplexPu, ComplexPu) {
    let e = i_l_ref - i_l_meas;
    let v_inv = v_ff + e * g.k_pc + integrator + (i_l_meas * l_f).mul_j();
    (v_inv, e * g.k_ic)
}

/// Virtual admittance `1/(s L_v + R_v)` realized in the dq frame:
/// `(l_v/omega_n) di_y/dt = dv - r_v i_y - j l_v i_y`.
pub fn virtual_admittance_loop(
    v_ref: ComplexPu,
    v_meas: ComplexPu,
    i_o: ComplexPu,
    i_y: ComplexPu,
    p: &VirtualAdmittanceParams,
    base: &PerUnitBase,
) -> (ComplexPu, ComplexPu) {
    let dv = v_ref - v_meas;
    let d_i_y = (dv - i_y * p.r_v - (i_y * p.l_v).mul_j()) * (base.omega_n() / p.l_v);
    (i_o + i_y, d_i_y)
}

/// Stationary-frame voltage reference `r_virt i_o + v_od e^{j theta}`.
pub fn pr_reference_gen(v_od_ref: f64, theta: f64, i_o_ab: ComplexPu, r_virt: f64) -> ComplexPu {
    i_o_ab * r_virt + ComplexPu::from_polar(v_od_ref, theta)
}

/// Canonical states of one resonator axis:
/// `x1' = -2 w_c x1 + x2 + K_r e`, `x2' = -w_r^2 x1`, output `x1`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AxisResonator {
    pub x1: f64,
    pub x2: f64,
}

impl AxisResonator {
    pub fn derivatives(&self, e: f64, g: &PrGains) -> AxisResonator {
        AxisResonator {
            x1: -2.0 * g.omega_c * self.x1 + self.x2 + g.k_r_ab * e,
            x2: -g.omega_res * g.omega_res * self.x1,
        }
    }
}

/// PR voltage loop in the stationary frame with one canonical resonator
/// per axis. Returns the inductor current reference and the resonator
/// derivatives `[alpha, beta]`.
pub fn pr_voltage_loop(
    v_ref_ab: ComplexPu,
    v_meas_ab: ComplexPu,
    i_o_ab: ComplexPu,
    resonators: &[AxisResonator; 2],
    g: &PrGains,
) -> (ComplexPu, [AxisResonator; 2]) {
    let e = v_ref_ab - v_meas_ab;
    let out = ComplexPu::new(resonators[0].x1, resonators[1].x1);
    let i_l_ref = i_o_ab + e * g.k_p_ab + out;
    let d = [
        resonators[0].derivatives(e.re, g),
        resonators[1].derivatives(e.im, g),
    ];
    (i_l_ref, d)
}

/// Modal form of the resonator: poles `p`, `conj(p)` and residues `r`,
/// `conj(r)` such that `H(s) = r/(s-p) + conj(r)/(s-conj(p))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonatorModes {
    pub pole: Complex64,
    pub residue: Complex64,
}

impl ResonatorModes {
    pub fn new(g: &PrGains) -> Self {
        let wd = (g.omega_res * g.omega_res - g.omega_c * g.omega_c).sqrt();
        let pole = Complex64::new(-g.omega_c, wd);
        let residue = g.k_r_ab * pole / (pole - pole.conj());
        Self { pole, residue }
    }

    /// Resonator output in the frame of the states.
    pub fn output(&self, s: &PrState) -> ComplexPu {
        let a: Complex64 = s.positive.into();
        let b: Complex64 = s.negative.into();
        (self.residue * a + self.residue.conj() * b).into()
    }

    /// Derivatives of the modal states in a frame rotating at `omega_frame`.
    pub fn derivatives(&self, s: &PrState, e: ComplexPu, omega_frame: f64) -> PrState {
        let a: Complex64 = s.positive.into();
        let b: Complex64 = s.negative.into();
        let e: Complex64 = e.into();
        let jw = Complex64::new(0.0, omega_frame);
        PrState {
            positive: ((self.pole - jw) * a + e).into(),
            negative: ((self.pole.conj() - jw) * b + e).into(),
        }
    }

    /// Maps modal states expressed in a frame at angle `phase` to the
    /// canonical per-axis states in the stationary frame.
    pub fn to_canonical(&self, s: &PrState, phase: f64, e_ab: ComplexPu, g: &PrGains) -> [AxisResonator; 2] {
        let rot = Complex64::from_polar(1.0, phase);
        let a = Complex64::from(s.positive) * rot;
        let b = Complex64::from(s.negative) * rot;
        let (r, p) = (self.residue, self.pole);
        let x1 = r * a + r.conj() * b;
        // x2 = x1' + 2 w_c x1 - K_r e
        let x1_dot = r * p * a + r.conj() * p.conj() * b + (r + r.conj()) * Complex64::from(e_ab);
        let x2 = x1_dot + 2.0 * g.omega_c * x1 - g.k_r_ab * Complex64::from(e_ab);
        [
            AxisResonator { x1: x1.re, x2: x2.re },
            AxisResonator { x1: x1.im, x2: x2.im },
        ]
    }

    /// Frequency response of the resonator at `s = j omega`.
    pub fn response(&self, omega: f64) -> Option<Complex64> {
        let jw = Complex64::new(0.0, omega);
        let d1 = jw - self.pole;
        let d2 = jw - self.pole.conj();
        if d1.norm() < 1e-12 || d2.norm() < 1e-12 {
            return None;
        }
        Some(self.residue / d1 + self.residue.conj() / d2)
    }
}

/// Proportional current loop `v_ff + k (i_ref - i)`.
pub fn p_current_loop(i_l_ref: ComplexPu, i_l_meas: ComplexPu, v_ff: ComplexPu, k_i_ab: f64) -> ComplexPu {
    v_ff + (i_l_ref - i_l_meas) * k_i_ab
}

/// Result of one controller evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerOutput {
    /// Converter voltage command in the common frame.
    pub v_inv: ComplexPu,
    pub derivatives: ControllerState,
    /// Controller angular frequency (rad/s).
    pub omega: f64,
    /// Voltage tracking error `v_ref - v_o` in the common frame (zero for
    /// the variant without a voltage loop).
    pub voltage_error: ComplexPu,
}

pub fn controller_step(
    spec: &ControllerSpec,
    meas: &Measurements,
    state: &ControllerState,
    sp: &Setpoints,
    plant: &PlantInfo,
) -> ControllerOutput {
    let base = &plant.base;
    let omega_n = base.omega_n();
    let mut d = ControllerState::default();
    let theta = state.theta;
    let to_ctrl = |x: ComplexPu| rotate_to_frame(x, theta);
    let from_ctrl = |x: ComplexPu| rotate_from_frame(x, theta);

    let cascaded_dq = |v_od_ref: f64, inner: &InnerLoopGains, d: &mut ControllerState| {
        let v_ref = ComplexPu::new(v_od_ref, 0.0);
        let v_o = to_ctrl(meas.v_o);
        let i_o = to_ctrl(meas.i_o);
        let i_l = to_ctrl(meas.i_l);
        let (i_l_ref, dv) = voltage_pi_loop(v_ref, v_o, i_o, state.v_pi, inner, plant.filter.c_f);
        let (v_inv, dc) = current_pi_loop(i_l_ref, i_l, v_o, state.c_pi, inner, plant.filter.l_f);
        d.v_pi = dv;
        d.c_pi = dc;
        (from_ctrl(v_inv), from_ctrl(v_ref - v_o))
    };

    let (v_inv, omega, voltage_error) = match spec {
        ControllerSpec::Droop { droop, inner } => {
            let (omega, v_od_ref, _) = droop_power_loop(sp, meas.p, meas.q, droop, base);
            let (v_inv, err) = cascaded_dq(v_od_ref, inner, &mut d);
            (v_inv, omega, err)
        }
        ControllerSpec::VsmOuter { vsm } => {
            let out = vsm_power_loop(sp, meas.p, meas.q, state.omega_dev, vsm, base);
            d.omega_dev = out.d_omega_dev;
            let v_inv = from_ctrl(ComplexPu::new(out.v_od_ref, 0.0));
            (v_inv, out.omega, ComplexPu::ZERO)
        }
        ControllerSpec::VsmInner { vsm, inner } => {
            let out = vsm_power_loop(sp, meas.p, meas.q, state.omega_dev, vsm, base);
            d.omega_dev = out.d_omega_dev;
            let (v_inv, err) = cascaded_dq(out.v_od_ref, inner, &mut d);
            (v_inv, out.omega, err)
        }
        ControllerSpec::VirtualAdmittance {
            vsm,
            admittance,
            inner,
        } => {
            let out = vsm_power_loop(sp, meas.p, meas.q, state.omega_dev, vsm, base);
            d.omega_dev = out.d_omega_dev;
            let v_ref = ComplexPu::new(out.v_od_ref, 0.0);
            let v_o = to_ctrl(meas.v_o);
            let i_o = to_ctrl(meas.i_o);
            let i_l = to_ctrl(meas.i_l);
            let (i_l_ref, dy) = virtual_admittance_loop(v_ref, v_o, i_o, state.y_virt, admittance, base);
            let (v_inv, dc) = current_pi_loop(i_l_ref, i_l, v_o, state.c_pi, inner, plant.filter.l_f);
            d.y_virt = dy;
            d.c_pi = dc;
            (from_ctrl(v_inv), out.omega, from_ctrl(v_ref - v_o))
        }
        ControllerSpec::ProportionalResonant { vsm, pr } => {
            let out = vsm_power_loop(sp, meas.p, meas.q, state.omega_dev, vsm, base);
            d.omega_dev = out.d_omega_dev;
            // Stationary-frame laws evaluated on common-frame phasors: the
            // common frame rotates at omega_n, so e^{j theta_abs} becomes
            // e^{j theta} and the resonator modes carry the frame rotation.
            let v_ref = pr_reference_gen(out.v_od_ref, theta, meas.i_o, pr.r_virt);
            let e = v_ref - meas.v_o;
            let modes = ResonatorModes::new(pr);
            let i_l_ref = meas.i_o + e * pr.k_p_ab + modes.output(&state.pr);
            d.pr = modes.derivatives(&state.pr, e, omega_n);
            let v_inv = p_current_loop(i_l_ref, meas.i_l, meas.v_o, pr.k_i_ab);
            (v_inv, out.omega, e)
        }
    };
    d.theta = omega - omega_n;

    ControllerOutput {
        v_inv,
        derivatives: d,
        omega,
        voltage_error,
    }
}

/// Controller frequency in Hz.
pub fn frequency_hz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

/// Initial controller state and the setpoints that hold the operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerInit {
    pub state: ControllerState,
    pub setpoints: Setpoints,
}

const INIT_RESIDUAL: f64 = 1e-8;

/// Back-solves controller states and matching setpoints so that the
/// controller reproduces `op` with zero state derivatives.
///
/// The active and reactive references are the operating-point powers; the
/// voltage reference is whatever magnitude the variant's reference law must
/// produce at that point.
pub fn init_controller_state(
    spec: &ControllerSpec,
    op: &OperatingPoint,
    network: &NetworkParams,
) -> Result<ControllerInit> {
    spec.validate()?;
    let plant = PlantInfo::from(network);
    let meas = Measurements::new(op.network.v_o, op.network.i_l, op.output_current(&network.load));
    let FilterParams { l_f, c_f, .. } = plant.filter;
    let mut state = ControllerState::default();

    let need_bias = |gain: f64, bias: ComplexPu, what: &str| -> Result<()> {
        if gain == 0.0 && bias.norm() > 1e-12 {
            return Err(GfcError::InitInfeasible(format!(
                "{what} integral gain is zero but the operating point needs a bias of {:.3e} pu",
                bias.norm()
            )));
        }
        Ok(())
    };

    let current_loop_bias = |theta: f64| {
        let v_o = rotate_to_frame(meas.v_o, theta);
        let i_l = rotate_to_frame(meas.i_l, theta);
        let v_inv = rotate_to_frame(op.v_inv, theta);
        v_inv - v_o - (i_l * l_f).mul_j()
    };

    let v_mag = match spec {
        ControllerSpec::Droop { inner, .. } | ControllerSpec::VsmInner { inner, .. } => {
            state.theta = meas.v_o.arg();
            let v_o = rotate_to_frame(meas.v_o, state.theta);
            let i_o = rotate_to_frame(meas.i_o, state.theta);
            let i_l = rotate_to_frame(meas.i_l, state.theta);
            state.v_pi = i_l - i_o - (v_o * c_f).mul_j();
            state.c_pi = current_loop_bias(state.theta);
            need_bias(inner.k_iv, state.v_pi, "voltage loop")?;
            need_bias(inner.k_ic, state.c_pi, "current loop")?;
            meas.v_o.norm()
        }
        ControllerSpec::VsmOuter { .. } => {
            state.theta = op.v_inv.arg();
            op.v_inv.norm()
        }
        ControllerSpec::VirtualAdmittance {
            admittance, inner, ..
        } => {
            let i_y = meas.i_l - meas.i_o;
            let z_v = ComplexPu::new(admittance.r_v, admittance.l_v);
            let v_ref = meas.v_o + z_v * i_y;
            state.theta = v_ref.arg();
            state.y_virt = rotate_to_frame(i_y, state.theta);
            state.c_pi = current_loop_bias(state.theta);
            need_bias(inner.k_ic, state.c_pi, "current loop")?;
            v_ref.norm()
        }
        ControllerSpec::ProportionalResonant { pr, .. } => {
            if pr.k_i_ab == 0.0 {
                return Err(GfcError::InitInfeasible(
                    "proportional current gain is zero; the converter voltage cannot be commanded".into(),
                ));
            }
            let i_l_ref = meas.i_l + (op.v_inv - meas.v_o) / pr.k_i_ab;
            let needed = i_l_ref - meas.i_o;
            let modes = ResonatorModes::new(pr);
            let omega_n = plant.base.omega_n();
            let e = match modes.response(omega_n) {
                None => ComplexPu::ZERO,
                Some(h) => {
                    let total = Complex64::new(pr.k_p_ab, 0.0) + h;
                    if total.norm() == 0.0 {
                        return Err(GfcError::InitInfeasible("PR voltage loop has zero gain at the fundamental".into()));
                    }
                    (Complex64::from(needed) / total).into()
                }
            };
            let y = needed - e * pr.k_p_ab;
            let jw = Complex64::new(0.0, omega_n);
            let ec: Complex64 = e.into();
            let neg = -ec / (modes.pole.conj() - jw);
            let pos = if e == ComplexPu::ZERO {
                Complex64::from(y) / modes.residue
            } else {
                -ec / (modes.pole - jw)
            };
            state.pr = PrState {
                positive: pos.into(),
                negative: neg.into(),
            };
            let v_ref = meas.v_o + e;
            let internal = v_ref - meas.i_o * pr.r_virt;
            state.theta = internal.arg();
            internal.norm()
        }
    };

    let setpoints = Setpoints {
        p_ref: op.p,
        q_ref: op.q,
        v_ref: v_mag,
    };
    setpoints.validate()?;

    let out = controller_step(spec, &meas, &state, &setpoints, &plant);
    let residual = (out.v_inv - op.v_inv).norm().max(out.derivatives.norm());
    if !(residual < INIT_RESIDUAL) {
        return Err(GfcError::InitInfeasible(format!(
            "back-solved state leaves a residual of {residual:.3e}"
        )));
    }
    Ok(ControllerInit { state, setpoints })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::steady_state_solve;
    use approx::assert_abs_diff_eq;

    fn base() -> PerUnitBase {
        PerUnitBase::fifty_hz()
    }

    fn sp(p: f64, q: f64, v: f64) -> Setpoints {
        Setpoints {
            p_ref: p,
            q_ref: q,
            v_ref: v,
        }
    }

    #[test]
    fn variant_ids_round_trip() {
        for v in ControllerVariant::ALL {
            assert_eq!(v.id().parse::<ControllerVariant>().unwrap(), v);
        }
        assert!(matches!(
            "voc".parse::<ControllerVariant>(),
            Err(GfcError::UnknownVariant(_))
        ));
    }

    #[test]
    fn droop_examples() {
        let b = base();
        let g = DroopGains {
            k_p: 1.0,
            k_q: 0.05,
            q_sign: ReactiveDroopSign::AsPrinted,
        };
        let (w, _, vq) = droop_power_loop(&sp(0.7, 0.0, 1.0), 0.7, 0.0, &g, &b);
        assert_eq!(w, b.omega_n());
        assert_eq!(vq, 0.0);
        let (w, _, _) = droop_power_loop(&sp(1.0, 0.0, 1.0), 0.8, 0.0, &g, &b);
        assert_abs_diff_eq!(w, b.omega_n() + 0.2, epsilon = 1e-12);
        let (_, vd, _) = droop_power_loop(&sp(1.0, 0.0, 1.0), 1.0, 0.1, &g, &b);
        assert_abs_diff_eq!(vd, 1.005, epsilon = 1e-12);

        let flipped = DroopGains {
            q_sign: ReactiveDroopSign::Flipped,
            ..g
        };
        let (_, vd, _) = droop_power_loop(&sp(1.0, 0.0, 1.0), 1.0, 0.1, &flipped, &b);
        assert_abs_diff_eq!(vd, 0.995, epsilon = 1e-12);
    }

    #[test]
    fn vsm_examples() {
        let b = base();
        let g = VsmGains {
            j_inertia: 0.2,
            d_p: 0.5,
            k_q: 0.0,
            q_sign: ReactiveDroopSign::AsPrinted,
        };
        let out = vsm_power_loop(&sp(1.0, 0.0, 1.0), 0.8, 0.0, 0.0, &g, &b);
        assert_abs_diff_eq!(out.d_omega_dev, 1.0, epsilon = 1e-12);
        let eq = vsm_power_loop(&sp(1.0, 0.0, 1.0), 1.0, 0.0, 0.0, &g, &b);
        assert_eq!(eq.d_omega_dev, 0.0);
        assert_eq!(eq.omega, b.omega_n());
    }

    #[test]
    fn vsm_step_matches_first_order_solution() {
        // integrate J w' = dP - D w with fine explicit steps; compare with
        // (dP/D)(1 - e^{-D t / J}) at t = J/D
        let b = base();
        let g = VsmGains {
            j_inertia: 0.2,
            d_p: 0.5,
            k_q: 0.0,
            q_sign: ReactiveDroopSign::AsPrinted,
        };
        let s = sp(1.2, 0.0, 1.0);
        let t_end = g.j_inertia / g.d_p;
        let n = 40_000;
        let h = t_end / n as f64;
        let mut w = 0.0;
        for _ in 0..n {
            let f = |w: f64| vsm_power_loop(&s, 1.0, 0.0, w, &g, &b).d_omega_dev;
            let k1 = f(w);
            let k2 = f(w + 0.5 * h * k1);
            let k3 = f(w + 0.5 * h * k2);
            let k4 = f(w + h * k3);
            w += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let expected = 0.2 / 0.5 * (1.0 - (-1.0f64).exp());
        assert_abs_diff_eq!(w, expected, epsilon = 1e-10);
    }

    fn inner(k_pv: f64, k_iv: f64, k_pc: f64, k_ic: f64) -> InnerLoopGains {
        InnerLoopGains { k_pv, k_iv, k_pc, k_ic }
    }

    #[test]
    fn voltage_loop_examples() {
        let z = ComplexPu::ZERO;
        let (i, _) = voltage_pi_loop(ComplexPu::ONE, ComplexPu::ONE, ComplexPu::new(0.5, 0.0), z, &inner(2.0, 400.0, 0.0, 0.0), 0.0);
        assert_eq!(i, ComplexPu::new(0.5, 0.0));
        let (i, d) = voltage_pi_loop(ComplexPu::new(0.01, 0.0), z, z, z, &inner(2.0, 0.0, 0.0, 0.0), 0.0);
        assert_abs_diff_eq!(i.re, 0.02, epsilon = 1e-15);
        assert_eq!(d, z);
        let (i, _) = voltage_pi_loop(ComplexPu::ONE, ComplexPu::ONE, z, z, &inner(0.0, 0.0, 0.0, 0.0), 0.05);
        assert_abs_diff_eq!(i.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(i.im, 0.05, epsilon = 1e-15);
    }

    #[test]
    fn current_loop_examples() {
        let z = ComplexPu::ZERO;
        let v_ff = ComplexPu::new(0.98, 0.1);
        let (v, _) = current_pi_loop(ComplexPu::ONE, ComplexPu::ONE, v_ff, z, &inner(0.0, 0.0, 0.8, 8.0), 0.0);
        assert_eq!(v, v_ff);
        let (v, _) = current_pi_loop(ComplexPu::new(0.1, 0.0), z, z, z, &inner(0.0, 0.0, 0.5, 0.0), 0.0);
        assert_abs_diff_eq!(v.re, 0.05, epsilon = 1e-15);
        let (v, _) = current_pi_loop(ComplexPu::ONE, ComplexPu::ONE, z, z, &inner(0.0, 0.0, 0.0, 0.0), 0.1);
        assert_abs_diff_eq!(v.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.im, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn virtual_admittance_examples() {
        let b = base();
        let p = VirtualAdmittanceParams { l_v: 0.05, r_v: 0.1 };
        let z = ComplexPu::ZERO;
        let (_, d) = virtual_admittance_loop(ComplexPu::new(0.01, 0.0), z, z, z, &p, &b);
        // 0.2 per unit of per-unit time
        assert_abs_diff_eq!(d.re / b.omega_n(), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(d.im, 0.0, epsilon = 1e-12);

        // steady state of the dc error is dv / (r_v + j l_v)
        let dv = ComplexPu::new(0.01, -0.004);
        let ss = dv / ComplexPu::new(p.r_v, p.l_v);
        let (_, d) = virtual_admittance_loop(dv, z, z, ss, &p, &b);
        assert!(d.norm() < 1e-12);

        let i_o = ComplexPu::new(0.7, 0.2);
        let (i, _) = virtual_admittance_loop(ComplexPu::ONE, ComplexPu::ONE, i_o, z, &p, &b);
        assert_eq!(i, i_o);
    }

    #[test]
    fn pr_reference_examples() {
        let z = ComplexPu::ZERO;
        assert_eq!(pr_reference_gen(1.0, 0.0, z, 0.0), ComplexPu::ONE);
        let v = pr_reference_gen(1.0, PI / 2.0, z, 0.0);
        assert_abs_diff_eq!(v.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.im, 1.0, epsilon = 1e-15);
        let v = pr_reference_gen(1.0, 0.0, ComplexPu::ONE, 0.02);
        assert_abs_diff_eq!(v.re, 1.02, epsilon = 1e-15);
    }

    fn pr_gains() -> PrGains {
        PrGains {
            k_p_ab: 1.0,
            k_r_ab: 200.0,
            omega_res: base().omega_n(),
            omega_c: 0.0,
            k_i_ab: 0.8,
            r_virt: 0.02,
        }
    }

    #[test]
    fn pr_loop_zero_error_and_dc_gain() {
        let g = pr_gains();
        let rest = [AxisResonator::default(); 2];
        let i_o = ComplexPu::new(0.3, -0.4);
        let (i, d) = pr_voltage_loop(ComplexPu::ONE, ComplexPu::ONE, i_o, &rest, &g);
        assert_eq!(i, i_o);
        assert_eq!(d, rest);

        // instantaneous contribution of a dc error is K_p e
        let e = ComplexPu::new(0.01, 0.02);
        let (i, _) = pr_voltage_loop(e, ComplexPu::ZERO, ComplexPu::ZERO, &rest, &g);
        assert_eq!(i, e);
    }

    fn rk4<const N: usize>(x: [f64; N], h: f64, t: f64, f: impl Fn(f64, &[f64; N]) -> [f64; N]) -> [f64; N] {
        let add = |a: &[f64; N], b: &[f64; N], s: f64| {
            let mut o = *a;
            for i in 0..N {
                o[i] += s * b[i];
            }
            o
        };
        let k1 = f(t, &x);
        let k2 = f(t + h / 2.0, &add(&x, &k1, h / 2.0));
        let k3 = f(t + h / 2.0, &add(&x, &k2, h / 2.0));
        let k4 = f(t + h, &add(&x, &k3, h));
        let mut o = x;
        for i in 0..N {
            o[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        o
    }

    #[test]
    fn resonator_grows_linearly_at_resonance() {
        // e = sin(w t): x1 = (K/2) t sin(w t) for the undamped resonator
        let g = pr_gains();
        let w = g.omega_res;
        let h = 1e-5;
        let n = (5.0 * 0.02 / h) as usize;
        let mut x = [0.0; 2];
        let mut t = 0.0;
        let mut max_err: f64 = 0.0;
        for _ in 0..n {
            x = rk4(x, h, t, |t, x| {
                let r = AxisResonator { x1: x[0], x2: x[1] }.derivatives((w * t).sin(), &g);
                [r.x1, r.x2]
            });
            t += h;
            let exact = 0.5 * g.k_r_ab * t * (w * t).sin();
            max_err = max_err.max((x[0] - exact).abs());
        }
        assert!(max_err < 1e-6, "max error {max_err}");
        // envelope after five cycles equals (K/2) t
        assert_abs_diff_eq!(0.5 * g.k_r_ab * t, 10.0, epsilon = 1e-6);
    }

    #[test]
    fn modal_resonator_matches_canonical_form() {
        // drive both realizations with the same αβ error and compare outputs
        for omega_c in [0.0, 5.0] {
            let g = PrGains { omega_c, ..pr_gains() };
            let w = base().omega_n();
            let modes = ResonatorModes::new(&g);
            let e_ab = |t: f64| ComplexPu::new(0.02 * (w * t + 0.3).cos() + 0.01 * (-30.0 * t).exp(), 0.015 * (w * t).sin() - 0.005 * (1.3 * w * t).cos());
            let h = 2e-6;
            let mut canon = [0.0; 4];
            let mut modal = [0.0; 4];
            let mut t = 0.0;
            for _ in 0..25_000 {
                canon = rk4(canon, h, t, |t, x| {
                    let e = e_ab(t);
                    let a = AxisResonator { x1: x[0], x2: x[1] }.derivatives(e.re, &g);
                    let b = AxisResonator { x1: x[2], x2: x[3] }.derivatives(e.im, &g);
                    [a.x1, a.x2, b.x1, b.x2]
                });
                modal = rk4(modal, h, t, |t, x| {
                    let s = PrState {
                        positive: ComplexPu::new(x[0], x[1]),
                        negative: ComplexPu::new(x[2], x[3]),
                    };
                    let e = rotate_to_frame(e_ab(t), w * t);
                    let d = modes.derivatives(&s, e, w);
                    [d.positive.re, d.positive.im, d.negative.re, d.negative.im]
                });
                t += h;
            }
            let s = PrState {
                positive: ComplexPu::new(modal[0], modal[1]),
                negative: ComplexPu::new(modal[2], modal[3]),
            };
            let out_ab = rotate_from_frame(modes.output(&s), w * t);
            assert!((out_ab.re - canon[0]).abs() < 1e-8, "alpha {} vs {}", out_ab.re, canon[0]);
            assert!((out_ab.im - canon[2]).abs() < 1e-8);
            let mapped = modes.to_canonical(&s, w * t, e_ab(t), &g);
            assert!((mapped[0].x2 - canon[1]).abs() < 1e-5 * canon[1].abs().max(1.0));
            assert!((mapped[1].x2 - canon[3]).abs() < 1e-5 * canon[3].abs().max(1.0));
        }
    }

    #[test]
    fn p_current_loop_examples() {
        let v_ff = ComplexPu::new(1.0, 0.2);
        assert_eq!(p_current_loop(ComplexPu::ONE, ComplexPu::ONE, v_ff, 0.8), v_ff);
        let v = p_current_loop(ComplexPu::new(0.1, 0.0), ComplexPu::ZERO, v_ff, 0.8);
        assert_abs_diff_eq!(v.re, 1.08, epsilon = 1e-15);
        let v2 = p_current_loop(ComplexPu::new(0.2, 0.0), ComplexPu::ZERO, v_ff, 0.8);
        assert_abs_diff_eq!(v2.re - v_ff.re, 2.0 * (v.re - v_ff.re), epsilon = 1e-15);
    }

    #[test]
    fn every_variant_holds_the_matched_operating_point() {
        let params = NetworkParams::default();
        let op = steady_state_solve(&params, 1.0, 1.0).unwrap();
        let gains = GainSet::defaults(&params.base);
        let plant = PlantInfo::from(&params);
        let meas = Measurements::new(op.network.v_o, op.network.i_l, op.output_current(&params.load));
        for v in ControllerVariant::ALL {
            let spec = gains.spec(v);
            let init = init_controller_state(&spec, &op, &params).unwrap();
            let out = controller_step(&spec, &meas, &init.state, &init.setpoints, &plant);
            assert!((out.v_inv - op.v_inv).norm() < 1e-10, "{v}: v_inv mismatch");
            assert!(out.derivatives.norm() < 1e-8, "{v}: derivatives {:?}", out.derivatives);
            assert_abs_diff_eq!(init.setpoints.p_ref, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn droop_init_carries_solved_angle_and_bias() {
        let params = NetworkParams::default();
        let op = steady_state_solve(&params, 1.0, 1.0).unwrap();
        let spec = GainSet::defaults(&params.base).spec(ControllerVariant::Droop);
        let init = init_controller_state(&spec, &op, &params).unwrap();
        assert_abs_diff_eq!(init.state.theta, op.network.v_o.arg(), epsilon = 1e-12);
        // the current integrator carries the filter resistance drop
        let i_l = rotate_to_frame(op.network.i_l, init.state.theta);
        assert!((init.state.c_pi - i_l * params.filter.r_f).norm() < 1e-12);
    }

    #[test]
    fn zero_integral_gain_is_infeasible() {
        let params = NetworkParams::default();
        let op = steady_state_solve(&params, 1.0, 1.0).unwrap();
        let gains = GainSet::defaults(&params.base);
        let spec = ControllerSpec::VsmInner {
            vsm: gains.vsm,
            inner: InnerLoopGains { k_ic: 0.0, ..gains.inner },
        };
        assert!(matches!(
            init_controller_state(&spec, &op, &params),
            Err(GfcError::InitInfeasible(_))
        ));
    }

    #[test]
    fn null_operating_point_gives_zero_states() {
        let mut params = NetworkParams::default();
        params.filter.r_f = 0.0;
        let op = steady_state_solve(&params, 0.0, 1.0).unwrap();
        let spec = GainSet::defaults(&params.base).spec(ControllerVariant::VsmInner);
        let init = init_controller_state(&spec, &op, &params).unwrap();
        assert!(init.state.theta.abs() < 1e-12);
        assert!(init.state.v_pi.norm() < 1e-12);
        assert!(init.state.c_pi.norm() < 1e-12);
        assert_eq!(init.state.omega_dev, 0.0);
    }

    #[test]
    fn pr_init_follows_periodic_steady_state() {
        let params = NetworkParams::default();
        let op = steady_state_solve(&params, 1.0, 1.0).unwrap();
        let gains = GainSet::defaults(&params.base);
        let spec = gains.spec(ControllerVariant::ProportionalResonant);
        let init = init_controller_state(&spec, &op, &params).unwrap();
        // in the stationary frame the resonator output is a fundamental
        // sinusoid; its canonical derivative must match the closed form
        let pr = gains.pr;
        let modes = ResonatorModes::new(&pr);
        let w = params.base.omega_n();
        let t = 0.0123;
        let canon = modes.to_canonical(&init.state.pr, w * t, ComplexPu::ZERO, &pr);
        let y = rotate_from_frame(modes.output(&init.state.pr), w * t);
        assert_abs_diff_eq!(canon[0].x1, y.re, epsilon = 1e-12);
        // x2 = x1' for e = 0, and x1 = |Y| cos(w t + phi) so x1' = -w y_beta
        assert_abs_diff_eq!(canon[0].x2, -w * y.im, epsilon = 1e-9);
        assert_eq!(init.state.pr.negative, ComplexPu::ZERO);
    }

    #[test]
    fn damped_pr_settles_with_finite_error() {
        let params = NetworkParams::default();
        let op = steady_state_solve(&params, 1.0, 1.0).unwrap();
        let mut gains = GainSet::defaults(&params.base);
        gains.pr.omega_c = 2.0;
        let spec = gains.spec(ControllerVariant::ProportionalResonant);
        let init = init_controller_state(&spec, &op, &params).unwrap();
        assert!(init.state.pr.negative.norm() > 0.0);
    }
}
