//! Tabular outputs: logical-error curves and training logs.

use serde::{Deserialize, Serialize};

use qldpc_core::eval::CurvePoint;

use crate::FormatError;

/// Two whitespace-separated columns `p_f ler` under a one-line `#` header.
pub fn to_xy(points: &[CurvePoint], label: &str) -> String {
    let mut out = format!("# p_f logical_error_rate ({label})\n");
    for p in points {
        out.push_str(&format!("{} {}\n", p.p_f, p.ler));
    }
    out
}

/// Parses the `x y` table, skipping `#` comments and blank lines.
pub fn parse_xy(text: &str) -> Result<Vec<(f64, f64)>, FormatError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            let cols: Vec<&str> = l.split_whitespace().collect();
            let bad = |message: String| FormatError::Parse { line: i + 1, message };
            let [x, y] = cols[..] else {
                return Err(bad(format!("expected two columns, got {}", cols.len())));
            };
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
            Ok((num(x)?, num(y)?))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub p_f: f64,
    pub trials: u64,
    pub failures: u64,
    pub ler: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl From<&CurvePoint> for CurveRow {
    fn from(p: &CurvePoint) -> Self {
        Self {
            p_f: p.p_f,
            trials: p.trials,
            failures: p.failures,
            ler: p.ler,
            ci_low: p.ci_low,
            ci_high: p.ci_high,
        }
    }
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String, FormatError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| FormatError::Stream(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| FormatError::invalid(e.to_string()))
}

fn from_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, FormatError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(FormatError::from)).collect()
}

/// CSV with header `p_f,trials,failures,ler,ci_low,ci_high`.
pub fn to_curve_csv(points: &[CurvePoint]) -> Result<String, FormatError> {
    to_csv(points.iter().map(CurveRow::from))
}

pub fn parse_curve_csv(text: &str) -> Result<Vec<CurveRow>, FormatError> {
    from_csv(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_seconds: f64,
}

/// CSV with header `epoch,mean_loss,wall_seconds`.
pub fn to_log_csv(rows: &[LogRow]) -> Result<String, FormatError> {
    to_csv(rows)
}

pub fn parse_log_csv(text: &str) -> Result<Vec<LogRow>, FormatError> {
    from_csv(text)
}
