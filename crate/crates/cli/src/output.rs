//! Trace, report and table writers.

use std::fmt::Write as _;

use gfc_core::controllers::ControllerVariant;
use gfc_core::metrics::MetricsReport;
use gfc_core::simulator::{Mode, TimeSeries};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;

pub const SIGNIFICANT_DIGITS: usize = 9;

/// Decimal rendering with exactly nine significant digits, never in
/// exponent notation.
pub fn format_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return format!("{:.*}", SIGNIFICANT_DIGITS - 1, 0.0);
    }
    // let the exponent formatter do the rounding, then move the point
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let n = digits.len() as i32;
    let body = if exp < 0 {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    } else if exp + 1 >= n {
        format!("{}{}", digits, "0".repeat((exp + 1 - n) as usize))
    } else {
        let split = (exp + 1) as usize;
        format!("{}.{}", &digits[..split], &digits[split..])
    };
    format!("{sign}{body}")
}

/// CSV with the ten trace channels, LF line endings.
pub fn trace_csv(ts: &TimeSeries) -> String {
    let mut out = TimeSeries::CHANNELS.join(",");
    out.push('\n');
    let cols: Vec<&[f64]> = TimeSeries::CHANNELS
        .iter()
        .map(|c| ts.channel(c).expect("known channel"))
        .collect();
    for k in 0..ts.len() {
        for (j, col) in cols.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out += &format_sig(col[k]);
        }
        out.push('\n');
    }
    out
}

pub fn eigenvalue_csv(modes: &[Mode]) -> String {
    let mut out = String::from("re,im,damping_ratio,freq_hz\n");
    for m in modes {
        let row = [m.eigenvalue.re, m.eigenvalue.im, m.damping_ratio(), m.frequency_hz()];
        let row: Vec<String> = row.iter().map(|&x| format_sig(x)).collect();
        out += &row.join(",");
        out.push('\n');
    }
    out
}

/// Resolved configuration as `key -> {value, source}`.
pub fn config_header(cfg: &RunConfig) -> Value {
    let map: serde_json::Map<String, Value> = cfg
        .provenance()
        .into_iter()
        .map(|(k, (v, s))| (k, json!({ "value": v, "source": s })))
        .collect();
    Value::Object(map)
}

#[derive(Debug, Serialize)]
pub struct RunReport<'a> {
    pub controller: ControllerVariant,
    pub scenario: &'a str,
    pub config: Value,
    pub metrics: &'a MetricsReport,
}

/// Outcome of one row of a comparison.
#[derive(Debug, Clone)]
pub enum Row {
    Done(MetricsReport),
    Failed(String),
}

/// Fixed-point cell; values that round to zero print without a sign.
fn fixed(x: f64, prec: usize) -> String {
    let s = format!("{x:.prec$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.chars().all(|c| c == '0' || c == '.') => rest.to_string(),
        _ => s,
    }
}

fn settling_cell(s: Option<f64>, horizon: f64) -> String {
    match s {
        Some(s) => format!("{s:.3}"),
        None => format!(">{horizon:.1}"),
    }
}

const HEADER: [&str; 11] = [
    "controller",
    "nadir[Hz]",
    "rocof[Hz/s]",
    "f_settle[s]",
    "P_os[%]",
    "P_settle[s]",
    "V_os[%]",
    "V_settle[s]",
    "I_os[%]",
    "I_settle[s]",
    "status",
];

/// Fixed-width table, one row per controller.
pub fn comparison_table(scenario: &str, rows: &[(ControllerVariant, Row)]) -> String {
    let mut cells: Vec<Vec<String>> = vec![HEADER.iter().map(|s| s.to_string()).collect()];
    for (v, row) in rows {
        let mut line = vec![v.id().to_string()];
        match row {
            Row::Done(r) => {
                let h = r.horizon;
                line.extend([
                    fixed(r.nadir, 4),
                    fixed(r.max_rocof, 4),
                    settling_cell(r.f_settling, h),
                    fixed(r.p_overshoot, 2),
                    settling_cell(r.p_settling, h),
                    fixed(r.v_overshoot, 2),
                    settling_cell(r.v_settling, h),
                    fixed(r.i_overshoot, 2),
                    settling_cell(r.i_settling, h),
                    "ok".into(),
                ]);
            }
            Row::Failed(msg) => {
                line.extend(std::iter::repeat_n("-".to_string(), HEADER.len() - 2));
                line.push(format!("FAILED: {msg}"));
            }
        }
        cells.push(line);
    }
    let widths: Vec<usize> = (0..HEADER.len() - 1)
        .map(|j| cells.iter().map(|r| r[j].len()).max().unwrap_or(0))
        .collect();
    let mut out = format!("scenario: {scenario}\n");
    for row in &cells {
        let mut line = String::new();
        for (j, cell) in row.iter().enumerate() {
            if j == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[j]);
            } else if j < widths.len() {
                let _ = write!(line, "  {cell:>w$}", w = widths[j]);
            } else {
                let _ = write!(line, "  {cell}");
            }
        }
        out += line.trim_end();
        out.push('\n');
    }
    out
}

pub fn comparison_json(scenario: &str, cfg: &RunConfig, rows: &[(ControllerVariant, Row)]) -> Value {
    let rows: Vec<Value> = rows
        .iter()
        .map(|(v, row)| match row {
            Row::Done(r) => json!({ "controller": v, "status": "ok", "metrics": r }),
            Row::Failed(msg) => json!({ "controller": v, "status": "failed", "error": msg }),
        })
        .collect();
    json!({ "scenario": scenario, "config": config_header(cfg), "rows": rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig(1.0), "1.00000000");
        assert_eq!(format_sig(50.0), "50.0000000");
        assert_eq!(format_sig(-0.123456789123), "-0.123456789");
        assert_eq!(format_sig(5e-5), "0.0000500000000");
        assert_eq!(format_sig(123456789012.0), "123456789000");
        assert_eq!(format_sig(9.9999999999), "10.0000000");
        assert_eq!(format_sig(0.0), "0.00000000");
        assert_eq!(format_sig(-0.0), "0.00000000");
        assert_eq!(format_sig(0.15000000000000002), "0.150000000");
    }

    #[test]
    fn formatted_values_round_trip_to_nine_digits() {
        for &x in &[std::f64::consts::PI, -2.718281828459045e-7, 314.159265358979, 1e12 / 7.0] {
            let back: f64 = format_sig(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 5e-9, "{x} -> {back}");
        }
    }

    #[test]
    fn unsettled_cells_show_the_horizon() {
        assert_eq!(settling_cell(None, 2.0), ">2.0");
        assert_eq!(settling_cell(Some(0.25), 2.0), "0.250");
        assert_eq!(fixed(-1e-9, 2), "0.00");
        assert_eq!(fixed(-0.5, 2), "-0.50");
    }
}
