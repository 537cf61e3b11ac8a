//! Inequality rows and their CSV encoding.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

/// Fixed CSV header.
pub const CSV_HEADER: [&str; 9] = [
    "experiment",
    "param_json",
    "left",
    "left_se",
    "right",
    "right_se",
    "margin",
    "verdict",
    "runtime_s",
];

/// Number of combined standard errors a row may fall short by.
pub const SE_TOLERANCE: f64 = 3.0;

/// Relative slack for rows that are exact up to floating-point rounding.
pub const ROUNDING: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        }
    }
}

/// One instance of `left ≤ right`, with Monte-Carlo standard errors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityReport {
    pub experiment: String,
    pub params: Map<String, Value>,
    pub left: f64,
    pub left_se: f64,
    pub right: f64,
    pub right_se: f64,
    pub margin: f64,
    pub verdict: Verdict,
    pub runtime_s: f64,
}

impl InequalityReport {
    /// Pass iff `right − left ≥ −3·√(left_se² + right_se²)`, with a relative
    /// rounding slack when both errors vanish.
    pub fn new(
        experiment: &str,
        params: Map<String, Value>,
        left: f64,
        left_se: f64,
        right: f64,
        right_se: f64,
    ) -> Self {
        let margin = right - left;
        let scale = left.abs().max(right.abs());
        let slack = if scale.is_finite() { ROUNDING * scale } else { 0.0 };
        let tol = (SE_TOLERANCE * left_se.hypot(right_se)).max(slack);
        let ok = margin >= -tol || (left == right && left.is_finite());
        Self::with_verdict(experiment, params, left, left_se, right, right_se, ok)
    }

    /// Pass iff `left < right` strictly (positivity claims).
    pub fn strict(
        experiment: &str,
        params: Map<String, Value>,
        left: f64,
        left_se: f64,
        right: f64,
        right_se: f64,
    ) -> Self {
        let ok = right - left > 0.0;
        Self::with_verdict(experiment, params, left, left_se, right, right_se, ok)
    }

    fn with_verdict(
        experiment: &str,
        params: Map<String, Value>,
        left: f64,
        left_se: f64,
        right: f64,
        right_se: f64,
        ok: bool,
    ) -> Self {
        Self {
            experiment: experiment.to_string(),
            params,
            left,
            left_se,
            right,
            right_se,
            margin: right - left,
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
            runtime_s: 0.0,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn param(&self, key: &str) -> Option<&Value> {
        self.params.get(key)
    }

    pub fn with_param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    /// Combined standard error `√(left_se² + right_se²)`.
    pub fn combined_se(&self) -> f64 {
        self.left_se.hypot(self.right_se)
    }
}

/// Float text used in CSV cells: shortest round-trip form, `inf`/`-inf`/`nan`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:?}")
    }
}

pub fn write_csv<W: Write>(rows: &[InequalityReport], out: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let params = serde_json::to_string(&r.params).expect("params serialize");
        w.write_record([
            r.experiment.as_str(),
            params.as_str(),
            &fmt_f64(r.left),
            &fmt_f64(r.left_se),
            &fmt_f64(r.right),
            &fmt_f64(r.right_se),
            &fmt_f64(r.margin),
            r.verdict.as_str(),
            &fmt_f64(r.runtime_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(rows: &[InequalityReport], path: &Path) -> Result<(), csv::Error> {
    let file = std::fs::File::create(path)?;
    write_csv(rows, std::io::BufWriter::new(file))
}

/// Builds a parameter map from `(key, value)` pairs.
#[macro_export]
macro_rules! params {
    ($($k:expr => $v:expr),* $(,)?) => {{
        #[allow(unused_mut)]
        let mut m = serde_json::Map::new();
        $( m.insert(($k).to_string(), serde_json::json!($v)); )*
        m
    }};
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_rule() {
        let p = Map::new();
        assert!(InequalityReport::new("x", p.clone(), 1.0, 0.0, 1.0, 0.0).passed());
        assert!(InequalityReport::new("x", p.clone(), 1.29, 0.1, 1.0, 0.0).passed());
        assert!(!InequalityReport::new("x", p.clone(), 1.31, 0.1, 1.0, 0.0).passed());
        // 3·√(0.03² + 0.04²) = 0.15
        assert!(InequalityReport::new("x", p.clone(), 1.149, 0.03, 1.0, 0.04).passed());
        assert!(!InequalityReport::new("x", p.clone(), 1.151, 0.03, 1.0, 0.04).passed());
        assert!(!InequalityReport::strict("x", p.clone(), 0.0, 0.0, 0.0, 0.0).passed());
        assert!(InequalityReport::strict("x", p.clone(), 0.0, 0.0, 1e-3, 0.0).passed());
        assert!(InequalityReport::new("x", p.clone(), 0.0, 0.0, f64::INFINITY, 0.0).passed());
        assert!(!InequalityReport::new("x", p.clone(), f64::INFINITY, 0.0, 1.0, 0.0).passed());
        assert!(!InequalityReport::new("x", p.clone(), f64::NAN, 0.0, 1.0, 0.0).passed());
        assert!(InequalityReport::new("x", p, 1.0 + 1e-15, 0.0, 1.0, 0.0).passed());
    }

    #[test]
    fn csv_layout() {
        let rows = vec![InequalityReport::new(
            "energy",
            params! {"dt" => 0.001, "label" => "a,b"},
            0.5,
            0.01,
            f64::INFINITY,
            0.0,
        )];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(
            lines.next().unwrap(),
            r#"energy,"{""dt"":0.001,""label"":""a,b""}",0.5,0.01,inf,0.0,inf,pass,0.0"#
        );
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let rec = reader.records().next().unwrap().unwrap();
        let back: Map<String, Value> = serde_json::from_str(&rec[1]).unwrap();
        assert_eq!(back["label"], "a,b");
    }
}
