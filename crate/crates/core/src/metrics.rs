//! Transient performance indicators extracted from sampled traces.
//!
//! All extractors take the sample times alongside the values and only look
//! at samples at or after the event time.

use serde::{Deserialize, Serialize};

use crate::error::{GfcError, Result};
use crate::simulator::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSettings {
    /// Sliding window for the rate of change of frequency (s).
    pub rocof_window: f64,
    /// Settling band as a percentage of the step size.
    pub band_pct: f64,
    /// Lower bound on the step size used for the band (pu of the channel base).
    pub band_floor: f64,
    /// Averaging window before the event for the pre-event value (s).
    pub pre_window: f64,
    /// Averaging window at the end of the trace for the final value (s).
    pub final_window: f64,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            rocof_window: 0.02,
            band_pct: 5.0,
            band_floor: 0.005,
            pre_window: 0.05,
            final_window: 0.1,
        }
    }
}

impl MetricSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rocof_window > 0.0
            && self.band_pct > 0.0
            && self.band_floor >= 0.0
            && self.pre_window > 0.0
            && self.final_window > 0.0;
        if !ok {
            return Err(GfcError::InvalidParameter(format!(
                "metric windows and band must be positive (got {self:?})"
            )));
        }
        Ok(())
    }
}

fn first_index_at(t: &[f64], time: f64) -> Option<usize> {
    // tolerate round-off in sample times
    let eps = 1e-9 * time.abs().max(1.0);
    t.iter().position(|&ti| ti >= time - eps)
}

/// Minimum of `f` at or after `event_time`.
pub fn frequency_nadir(t: &[f64], f: &[f64], event_time: f64) -> Result<f64> {
    let start = first_index_at(t, event_time).ok_or(GfcError::EmptyWindow)?;
    f[start..]
        .iter()
        .copied()
        .reduce(f64::min)
        .ok_or(GfcError::EmptyWindow)
}

/// Largest sliding-window slope `|f(t + w) - f(t)| / w` for `t >= event_time`.
pub fn max_rocof(t: &[f64], f: &[f64], event_time: f64, window: f64) -> Result<f64> {
    if t.len() < 2 {
        return Err(GfcError::EmptyWindow);
    }
    let dt = t[1] - t[0];
    if window < dt * (1.0 - 1e-9) {
        return Err(GfcError::InvalidParameter(format!(
            "ROCOF window {window} s is shorter than the sample spacing {dt} s"
        )));
    }
    let lag = (window / dt).round() as usize;
    let start = first_index_at(t, event_time).ok_or(GfcError::EmptyWindow)?;
    if start + lag >= f.len() {
        return Err(GfcError::EmptyWindow);
    }
    Ok((start..f.len() - lag)
        .map(|i| ((f[i + lag] - f[i]) / (t[i + lag] - t[i])).abs())
        .fold(0.0, f64::max))
}

/// Signed peak excursion in percent.
///
/// The extremum is the post-event sample farthest from `pre_value`. The
/// denominator is `|pre_value|`, or the steady-state change when the
/// baseline is zero.
pub fn overshoot_pct(t: &[f64], x: &[f64], event_time: f64, pre_value: f64, final_value: f64) -> Result<f64> {
    const DEGENERATE: f64 = 1e-9;
    let start = first_index_at(t, event_time).ok_or(GfcError::EmptyWindow)?;
    let denom = if pre_value.abs() > DEGENERATE {
        pre_value.abs()
    } else if (final_value - pre_value).abs() > DEGENERATE {
        (final_value - pre_value).abs()
    } else {
        return Err(GfcError::DegenerateBaseline);
    };
    let peak = x[start..]
        .iter()
        .copied()
        .max_by(|a, b| (a - pre_value).abs().total_cmp(&(b - pre_value).abs()))
        .ok_or(GfcError::EmptyWindow)?;
    Ok(100.0 * (peak - pre_value) / denom)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettlingBand {
    pub pct: f64,
    /// Size of the step the band is relative to.
    pub step: f64,
    /// Lower bound on the step magnitude.
    pub floor: f64,
}

impl SettlingBand {
    pub fn half_width(&self) -> f64 {
        self.pct / 100.0 * self.step.abs().max(self.floor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Settling {
    Settled(f64),
    /// Still outside the band at the end of the trace.
    Unsettled,
}

impl Settling {
    pub fn seconds(self) -> Option<f64> {
        match self {
            Settling::Settled(s) => Some(s),
            Settling::Unsettled => None,
        }
    }

    pub fn is_settled(self) -> bool {
        matches!(self, Settling::Settled(_))
    }

    /// Ordering key: unsettled compares as infinitely long.
    pub fn as_f64(self) -> f64 {
        self.seconds().unwrap_or(f64::INFINITY)
    }
}

/// Smallest delay after `event_time` from which `x` stays inside the band
/// around `final_value` until the end of the trace.
pub fn settling_time(t: &[f64], x: &[f64], event_time: f64, final_value: f64, band: SettlingBand) -> Settling {
    let Some(start) = first_index_at(t, event_time) else {
        return Settling::Unsettled;
    };
    let tol = band.half_width();
    let last_outside = (start..x.len()).rev().find(|&i| (x[i] - final_value).abs() > tol);
    match last_outside {
        None => Settling::Settled(0.0),
        Some(i) if i + 1 >= x.len() => Settling::Unsettled,
        Some(i) => Settling::Settled((t[i + 1] - event_time).max(0.0)),
    }
}

/// Mean of the samples with `from <= t < to`.
pub fn window_mean(t: &[f64], x: &[f64], from: f64, to: f64) -> Result<f64> {
    let eps = 1e-9 * to.abs().max(1.0);
    let (sum, n) = t
        .iter()
        .zip(x)
        .filter(|(&ti, _)| ti >= from - eps && ti < to - eps)
        .fold((0.0, 0usize), |(s, n), (_, &v)| (s + v, n + 1));
    if n == 0 {
        return Err(GfcError::EmptyWindow);
    }
    Ok(sum / n as f64)
}

/// Amplitude of the component at `freq_hz` of a real signal, estimated by
/// a single-bin DFT over the last whole number of periods in the trace.
pub fn fundamental_amplitude(t: &[f64], x: &[f64], freq_hz: f64, periods: usize) -> Result<f64> {
    if t.len() < 2 {
        return Err(GfcError::EmptyWindow);
    }
    let dt = t[1] - t[0];
    let n = ((periods as f64) / freq_hz / dt).round() as usize;
    if n == 0 || n > x.len() {
        return Err(GfcError::EmptyWindow);
    }
    let w = 2.0 * std::f64::consts::PI * freq_hz;
    let start = x.len() - n;
    let (mut re, mut im) = (0.0, 0.0);
    for i in start..x.len() {
        let (s, c) = (w * t[i]).sin_cos();
        re += x[i] * c;
        im -= x[i] * s;
    }
    Ok(2.0 * re.hypot(im) / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettledFlags {
    pub f: bool,
    pub p: bool,
    pub v: bool,
    pub i: bool,
}

/// Transient indicators of one run, one row of a comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Hz.
    pub nadir: f64,
    /// Hz/s.
    pub max_rocof: f64,
    /// s; `None` when unsettled.
    pub f_settling: Option<f64>,
    /// Percent.
    pub p_overshoot: f64,
    pub p_settling: Option<f64>,
    /// Percent, negative for dips.
    pub v_overshoot: f64,
    pub v_settling: Option<f64>,
    pub i_overshoot: f64,
    pub i_settling: Option<f64>,
    pub settled: SettledFlags,
    /// Pre-event frequency (Hz).
    pub f_pre: f64,
    /// Length of trace after the event (s), the bound quoted for unsettled
    /// channels.
    pub horizon: f64,
}

pub fn build_report(ts: &TimeSeries, event_time: f64, f_n: f64, cfg: &MetricSettings) -> Result<MetricsReport> {
    cfg.validate()?;
    let t = &ts.t;
    let t_end = *t.last().ok_or(GfcError::EmptyWindow)?;
    let final_from = t_end - cfg.final_window + ts.dt * 0.5;
    let stats = |x: &[f64]| -> Result<(f64, f64)> {
        let pre = window_mean(t, x, event_time - cfg.pre_window, event_time)?;
        let fin = window_mean(t, x, final_from, t_end + ts.dt)?;
        Ok((pre, fin))
    };
    // a channel that only enters the band inside the final-value window
    // has not demonstrably settled
    let latest_settling = t_end - cfg.final_window - event_time;
    let settle = |x: &[f64], pre: f64, fin: f64, base: f64| {
        let band = SettlingBand {
            pct: cfg.band_pct,
            step: fin - pre,
            floor: cfg.band_floor * base,
        };
        match settling_time(t, x, event_time, fin, band) {
            Settling::Settled(s) if s > latest_settling => Settling::Unsettled,
            other => other,
        }
    };

    let (f_pre, f_fin) = stats(&ts.f_ctrl)?;
    let (p_pre, p_fin) = stats(&ts.p)?;
    let (v_pre, v_fin) = stats(&ts.v_mag)?;
    let (i_pre, i_fin) = stats(&ts.i_mag)?;

    let f_settling = settle(&ts.f_ctrl, f_pre, f_fin, f_n);
    let p_settling = settle(&ts.p, p_pre, p_fin, 1.0);
    let v_settling = settle(&ts.v_mag, v_pre, v_fin, 1.0);
    let i_settling = settle(&ts.i_mag, i_pre, i_fin, 1.0);

    Ok(MetricsReport {
        nadir: frequency_nadir(t, &ts.f_ctrl, event_time)?,
        max_rocof: max_rocof(t, &ts.f_ctrl, event_time, cfg.rocof_window)?,
        f_settling: f_settling.seconds(),
        p_overshoot: overshoot_pct(t, &ts.p, event_time, p_pre, p_fin)?,
        p_settling: p_settling.seconds(),
        v_overshoot: overshoot_pct(t, &ts.v_mag, event_time, v_pre, v_fin)?,
        v_settling: v_settling.seconds(),
        i_overshoot: overshoot_pct(t, &ts.i_mag, event_time, i_pre, i_fin)?,
        i_settling: i_settling.seconds(),
        settled: SettledFlags {
            f: f_settling.is_settled(),
            p: p_settling.is_settled(),
            v: v_settling.is_settled(),
            i: i_settling.is_settled(),
        },
        f_pre,
        horizon: t_end - event_time,
    })
}
