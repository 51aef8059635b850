//! CSV and summary-record formatting.
//!
//! Numbers are printed like C's `%.12g`, independent of locale, and lines
//! end with a bare `\n`.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::dynsys::{FixedPoint, PhasePoint, Trajectory};
use crate::popdyn::MomentRow;

pub const SIGNIFICANT_DIGITS: usize = 12;

pub const MOMENT_HEADER: &[&str] =
    &["level", "x", "y", "z", "u", "v", "w", "se_x", "se_y", "se_z", "se_u", "se_v", "se_w"];
pub const TRAJECTORY_HEADER: &[&str] = &["iter", "X", "Z"];
pub const FIXED_POINT_HEADER: &[&str] = &["X", "Z", "multiplier_1", "multiplier_2", "unstable", "from_coupling"];
pub const PHASE_HEADER: &[&str] = &["lambda1", "lambda2", "classification", "iterations"];

/// `%.12g`.
pub fn fmt_num(v: f64) -> String {
    fmt_sig(v, SIGNIFICANT_DIGITS)
}

pub fn fmt_sig(v: f64, digits: usize) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn csv_line(fields: &[String]) -> String {
    let mut line = fields.join(",");
    line.push('\n');
    line
}

pub fn write_csv<W: Write>(out: &mut W, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
    out.write_all(header.join(",").as_bytes())?;
    out.write_all(b"\n")?;
    for row in rows {
        out.write_all(csv_line(row).as_bytes())?;
    }
    Ok(())
}

pub fn moment_rows(series: &[MomentRow]) -> Vec<Vec<String>> {
    series
        .iter()
        .map(|r| {
            let s = &r.stats;
            let mut row = vec![r.level.to_string()];
            row.extend(
                [s.x, s.y, s.z, s.u, s.v, s.w, s.se.x, s.se.y, s.se.z, s.se.u, s.se.v, s.se.w].into_iter().map(fmt_num),
            );
            row
        })
        .collect()
}

/// One row per iterate, starting at `iter = 1`; the starting state is not
/// repeated.
pub fn trajectory_rows(t: &Trajectory) -> Vec<Vec<String>> {
    t.states.iter().enumerate().skip(1).map(|(i, s)| vec![i.to_string(), fmt_num(s.xc), fmt_num(s.zc)]).collect()
}

pub fn fixed_point_rows(points: &[FixedPoint]) -> Vec<Vec<String>> {
    points
        .iter()
        .map(|p| {
            vec![
                fmt_num(p.state.xc),
                fmt_num(p.state.zc),
                fmt_num(p.multipliers[0]),
                fmt_num(p.multipliers[1]),
                p.is_unstable().to_string(),
                p.from_coupling.to_string(),
            ]
        })
        .collect()
}

pub fn phase_rows(points: &[PhasePoint]) -> Vec<Vec<String>> {
    points
        .iter()
        .map(|p| {
            vec![
                fmt_num(p.lambda1),
                fmt_num(p.lambda2),
                p.classification.as_str().to_string(),
                p.iterations.to_string(),
            ]
        })
        .collect()
}

/// Single-line `key=value` record, fields in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    fields: Vec<(String, String)>,
}

impl Summary {
    pub fn new(record: &str) -> Self {
        let mut s = Self::default();
        s.text("record", record);
        s
    }

    pub fn text(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.fields.push((key.to_string(), value.to_string()));
        self
    }

    pub fn num(&mut self, key: &str, value: f64) -> &mut Self {
        self.text(key, fmt_num(value))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut line = String::new();
        for (i, (k, v)) in self.fields.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            let _ = write!(line, "{k}={v}");
        }
        line.push('\n');
        line
    }
}
