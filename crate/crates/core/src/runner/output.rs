use std::fmt::Write as _;

use serde::Serialize;

/// Nine significant digits, plain decimal between 1e-5 and 1e9, exponent
/// otherwise. Trailing zeros are trimmed; zero is `0`.
pub fn fmt9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.8e}");
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        trim(&s).to_string()
    } else {
        format!("{}e{exp}", trim(mant))
    }
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Column-major builder for the time-series CSV.
#[derive(Debug, Clone, Default)]
pub struct Series {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            for (i, v) in r.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&fmt9(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let head = lines.next().ok_or("empty CSV")?;
        let columns: Vec<String> = head.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, l) in lines.enumerate() {
            if l.is_empty() {
                continue;
            }
            let r: Result<Vec<f64>, _> = l.split(',').map(str::parse::<f64>).collect();
            let r = r.map_err(|e| format!("row {}: {e}", i + 1))?;
            if r.len() != columns.len() {
                return Err(format!("row {}: {} fields, expected {}", i + 1, r.len(), columns.len()));
            }
            rows.push(r);
        }
        Ok(Self { columns, rows })
    }

    pub fn col(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Rounds every value through the CSV representation.
    pub fn quantized(&self) -> Self {
        Self {
            columns: self.columns.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(|v| fmt9(*v).parse().unwrap_or(f64::NAN)).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogLine {
    pub t_s: String,
    pub kind: String,
    pub turbine: Option<usize>,
    pub detail: String,
}

pub fn to_ndjson(lines: &[LogLine]) -> String {
    let mut out = String::new();
    for l in lines {
        let _ = writeln!(out, "{}", serde_json::to_string(l).expect("plain struct serializes"));
    }
    out
}
