//! Per-unit bases, phasor arithmetic and reference-frame rotations.
//!
//! All electrical quantities are per-unit on the converter base. Complex
//! quantities use the magnitude-invariant dq convention, so instantaneous
//! power is `p + jq = v * conj(i)` with no 3/2 factor.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GfcError, Result};

/// Per-unit system bases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerUnitBase {
    f_n: f64,
    omega_n: f64,
    /// Apparent power base in VA. Informational only.
    pub s_base: f64,
    /// Voltage base in V. Informational only.
    pub v_base: f64,
}

impl PerUnitBase {
    pub fn new(f_n: f64, s_base: f64, v_base: f64) -> Result<Self> {
        if !(f_n.is_finite() && f_n > 0.0) {
            return Err(GfcError::InvalidParameter(format!(
                "nominal frequency must be positive, got {f_n}"
            )));
        }
        Ok(Self {
            f_n,
            omega_n: 2.0 * PI * f_n,
            s_base,
            v_base,
        })
    }

    /// 50 Hz base with a 1 MVA / 690 V informational rating.
    pub fn fifty_hz() -> Self {
        Self::new(50.0, 1.0e6, 690.0).expect("50 Hz is a valid base")
    }

    pub fn f_n(&self) -> f64 {
        self.f_n
    }

    pub fn omega_n(&self) -> f64 {
        self.omega_n
    }
}

impl Default for PerUnitBase {
    fn default() -> Self {
        Self::fifty_hz()
    }
}

/// A per-unit complex quantity (dq or αβ pair).
#[derive(Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplexPu {
    pub re: f64,
    pub im: f64,
}

impl ComplexPu {
    pub const ZERO: ComplexPu = ComplexPu { re: 0.0, im: 0.0 };
    pub const ONE: ComplexPu = ComplexPu { re: 1.0, im: 0.0 };
    pub const J: ComplexPu = ComplexPu { re: 0.0, im: 1.0 };

    /// Builds a value from finite components.
    ///
    /// Non-finite input is a logic error; use [`ComplexPu::try_new`] for
    /// untrusted data.
    pub fn new(re: f64, im: f64) -> Self {
        debug_assert!(re.is_finite() && im.is_finite(), "non-finite ComplexPu");
        Self { re, im }
    }

    pub fn try_new(re: f64, im: f64) -> Result<Self> {
        if re.is_finite() && im.is_finite() {
            Ok(Self { re, im })
        } else {
            Err(GfcError::NonFinite(format!("complex value {re} + j{im}")))
        }
    }

    pub fn from_polar(mag: f64, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(mag * c, mag * s)
    }

    /// `e^{j angle}`.
    pub fn unit(angle: f64) -> Self {
        Self::from_polar(1.0, angle)
    }

    pub fn conj(self) -> Self {
        Self {
            re: self.re,
            im: -self.im,
        }
    }

    pub fn norm(self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn arg(self) -> f64 {
        self.im.atan2(self.re)
    }

    /// Multiplication by `j`.
    pub fn mul_j(self) -> Self {
        Self {
            re: -self.im,
            im: self.re,
        }
    }

    pub fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    pub fn inv(self) -> Self {
        let d = self.norm_sqr();
        Self {
            re: self.re / d,
            im: -self.im / d,
        }
    }
}

impl fmt::Debug for ComplexPu {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im < 0.0 {
            write!(f, "{}-j{}", self.re, -self.im)
        } else {
            write!(f, "{}+j{}", self.re, self.im)
        }
    }
}

impl From<Complex64> for ComplexPu {
    fn from(c: Complex64) -> Self {
        Self { re: c.re, im: c.im }
    }
}

impl From<ComplexPu> for Complex64 {
    fn from(c: ComplexPu) -> Self {
        Complex64::new(c.re, c.im)
    }
}

impl Add for ComplexPu {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            re: self.re + rhs.re,
            im: self.im + rhs.im,
        }
    }
}

impl AddAssign for ComplexPu {
    fn add_assign(&mut self, rhs: Self) {
        self.re += rhs.re;
        self.im += rhs.im;
    }
}

impl Sub for ComplexPu {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self {
            re: self.re - rhs.re,
            im: self.im - rhs.im,
        }
    }
}

impl SubAssign for ComplexPu {
    fn sub_assign(&mut self, rhs: Self) {
        self.re -= rhs.re;
        self.im -= rhs.im;
    }
}

impl Neg for ComplexPu {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            re: -self.re,
            im: -self.im,
        }
    }
}

impl Mul for ComplexPu {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self {
            re: self.re * rhs.re - self.im * rhs.im,
            im: self.re * rhs.im + self.im * rhs.re,
        }
    }
}

impl Mul<f64> for ComplexPu {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self {
            re: self.re * rhs,
            im: self.im * rhs,
        }
    }
}

impl Mul<ComplexPu> for f64 {
    type Output = ComplexPu;
    fn mul(self, rhs: ComplexPu) -> ComplexPu {
        rhs * self
    }
}

impl Div for ComplexPu {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        self * rhs.inv()
    }
}

impl Div<f64> for ComplexPu {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        Self {
            re: self.re / rhs,
            im: self.im / rhs,
        }
    }
}

/// Expresses `v` in a frame rotated by `theta`: `v * e^{-j theta}`.
pub fn rotate_to_frame(v: ComplexPu, theta: f64) -> ComplexPu {
    v * ComplexPu::unit(-theta)
}

/// Inverse of [`rotate_to_frame`]: `v * e^{j theta}`.
pub fn rotate_from_frame(v: ComplexPu, theta: f64) -> ComplexPu {
    v * ComplexPu::unit(theta)
}

/// Active and reactive power `p + jq = v * conj(i)`.
pub fn complex_power(v: ComplexPu, i: ComplexPu) -> (f64, f64) {
    let s = v * i.conj();
    (s.re, s.im)
}

/// Reactance-to-resistance ratio of a grid impedance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XrRatio {
    Finite(f64),
    /// Purely reactive impedance (zero resistance).
    Infinite,
}

impl XrRatio {
    pub fn value(self) -> f64 {
        match self {
            XrRatio::Finite(v) => v,
            XrRatio::Infinite => f64::INFINITY,
        }
    }
}

/// Strength of a Thevenin grid connection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridStrength {
    pub z_grid: ComplexPu,
    pub scr: f64,
    pub xr_ratio: XrRatio,
}

pub fn compute_grid_strength(z_grid: ComplexPu) -> Result<GridStrength> {
    let mag = z_grid.norm();
    if !z_grid.is_finite() || mag == 0.0 {
        return Err(GfcError::ZeroImpedance);
    }
    let xr_ratio = if z_grid.re == 0.0 {
        XrRatio::Infinite
    } else {
        XrRatio::Finite(z_grid.im / z_grid.re)
    };
    Ok(GridStrength {
        z_grid,
        scr: 1.0 / mag,
        xr_ratio,
    })
}

/// Impedance with magnitude `1/scr` and angle `atan(xr)`.
pub fn impedance_from_scr(scr: f64, xr_ratio: f64) -> Result<ComplexPu> {
    if !(scr.is_finite() && scr > 0.0) {
        return Err(GfcError::InvalidParameter(format!(
            "short-circuit ratio must be positive, got {scr}"
        )));
    }
    if xr_ratio.is_nan() || xr_ratio < 0.0 {
        return Err(GfcError::InvalidParameter(format!(
            "X/R ratio must be non-negative, got {xr_ratio}"
        )));
    }
    Ok(ComplexPu::from_polar(1.0 / scr, xr_ratio.atan()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn base_enforces_omega() {
        let b = PerUnitBase::new(50.0, 1.0, 1.0).unwrap();
        assert_eq!(b.omega_n(), 2.0 * PI * 50.0);
        assert!(PerUnitBase::new(0.0, 1.0, 1.0).is_err());
        assert!(PerUnitBase::new(-50.0, 1.0, 1.0).is_err());
        assert!(PerUnitBase::new(f64::NAN, 1.0, 1.0).is_err());
    }

    #[test]
    fn try_new_rejects_non_finite() {
        assert!(ComplexPu::try_new(f64::NAN, 0.0).is_err());
        assert!(ComplexPu::try_new(0.0, f64::INFINITY).is_err());
        assert!(ComplexPu::try_new(1.0, -2.0).is_ok());
    }

    #[test]
    fn rotation_examples() {
        let v = rotate_to_frame(ComplexPu::ONE, 0.0);
        assert_eq!(v, ComplexPu::ONE);

        let v = rotate_to_frame(ComplexPu::ONE, PI / 2.0);
        assert_abs_diff_eq!(v.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.im, -1.0, epsilon = 1e-15);

        // direct multiplication by e^{-j0.1}
        let (c, s) = (0.1f64.cos(), 0.1f64.sin());
        let expected = (0.8 * c + 0.6 * s, 0.6 * c - 0.8 * s);
        let v = rotate_to_frame(ComplexPu::new(0.8, 0.6), 0.1);
        assert_abs_diff_eq!(v.re, expected.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.im, expected.1, epsilon = 1e-15);

        let back = rotate_from_frame(ComplexPu::new(0.0, -1.0), PI / 2.0);
        assert_abs_diff_eq!(back.re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(back.im, 0.0, epsilon = 1e-15);
        assert_eq!(rotate_from_frame(ComplexPu::ONE, 0.0), ComplexPu::ONE);
    }

    #[test]
    fn paper_grid_strength() {
        let gs = compute_grid_strength(ComplexPu::new(0.1178, 0.5891)).unwrap();
        assert!((gs.scr - 1.66).abs() < 0.01, "scr {}", gs.scr);
        assert!((gs.xr_ratio.value() - 5.0).abs() < 0.01);
    }

    #[test]
    fn grid_strength_edge_cases() {
        let gs = compute_grid_strength(ComplexPu::new(0.5, 0.0)).unwrap();
        assert_eq!(gs.scr, 2.0);
        assert_eq!(gs.xr_ratio, XrRatio::Finite(0.0));

        let gs = compute_grid_strength(ComplexPu::new(0.6, 0.8)).unwrap();
        assert_abs_diff_eq!(gs.scr, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gs.xr_ratio.value(), 4.0 / 3.0, epsilon = 1e-12);

        let gs = compute_grid_strength(ComplexPu::new(0.0, 0.5)).unwrap();
        assert_eq!(gs.xr_ratio, XrRatio::Infinite);

        assert!(matches!(
            compute_grid_strength(ComplexPu::ZERO),
            Err(GfcError::ZeroImpedance)
        ));
    }

    #[test]
    fn scr_round_trip() {
        // 1.66 is the rounded SCR of 0.1178 + j0.5891 (exactly 1.6645)
        let z = impedance_from_scr(1.66, 5.0).unwrap();
        assert!((z.re - 0.1178).abs() < 1e-3);
        assert!((z.im - 0.5891).abs() < 2e-3);
        let exact = compute_grid_strength(ComplexPu::new(0.1178, 0.5891)).unwrap();
        let z = impedance_from_scr(exact.scr, exact.xr_ratio.value()).unwrap();
        assert!((z - ComplexPu::new(0.1178, 0.5891)).norm() < 1e-12);
        assert!(impedance_from_scr(0.0, 5.0).is_err());
    }

    #[test]
    fn complex_power_examples() {
        assert_eq!(complex_power(ComplexPu::ONE, ComplexPu::ONE), (1.0, 0.0));
        assert_eq!(
            complex_power(ComplexPu::ONE, ComplexPu::new(0.0, -1.0)),
            (0.0, 1.0)
        );
        // (1.02 + j0.05)(0.97 + j0.1)
        let (p, q) = complex_power(ComplexPu::new(1.02, 0.05), ComplexPu::new(0.97, -0.1));
        assert_abs_diff_eq!(p, 1.02 * 0.97 - 0.05 * 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(q, 1.02 * 0.1 + 0.05 * 0.97, epsilon = 1e-15);
    }

    fn finite() -> impl Strategy<Value = f64> {
        -10.0f64..10.0
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn rotation_preserves_magnitude(re in finite(), im in finite(), th in -50.0f64..50.0) {
            let v = ComplexPu::new(re, im);
            let r = rotate_to_frame(v, th);
            prop_assert!((r.norm() - v.norm()).abs() < 1e-12);
        }

        #[test]
        fn rotation_round_trip(re in finite(), im in finite(), th in -50.0f64..50.0) {
            let v = ComplexPu::new(re, im);
            let back = rotate_from_frame(rotate_to_frame(v, th), th);
            prop_assert!((back - v).norm() < 1e-12);
        }

        #[test]
        fn power_is_frame_invariant(
            vr in finite(), vi in finite(), ir in finite(), ii in finite(), th in -50.0f64..50.0
        ) {
            let v = ComplexPu::new(vr, vi);
            let i = ComplexPu::new(ir, ii);
            let (p0, q0) = complex_power(v, i);
            let (p1, q1) = complex_power(rotate_to_frame(v, th), rotate_to_frame(i, th));
            prop_assert!((p0 - p1).abs() < 1e-11);
            prop_assert!((q0 - q1).abs() < 1e-11);
        }
    }
}
