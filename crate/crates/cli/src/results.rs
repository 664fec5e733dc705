use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

pub const CSV_HEADER: [&str; 10] = [
    "problem",
    "method",
    "depth",
    "tau",
    "trial",
    "split",
    "excess_cost",
    "n_trees",
    "stop_reason",
    "runtime_s",
];

/// Stop reason recorded for a method whose fit failed.
pub const FAILED: &str = "failed";

/// One line of `results.csv`. Failed fits have no excess cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub problem: String,
    pub method: String,
    pub depth: usize,
    pub tau: f64,
    pub trial: usize,
    pub split: String,
    pub excess_cost: Option<f64>,
    pub n_trees: usize,
    pub stop_reason: String,
    pub runtime_s: f64,
}

impl Row {
    pub fn failed(&self) -> bool {
        self.excess_cost.is_none()
    }
}

/// `%.{digits}g`: fixed notation for moderate exponents, scientific otherwise,
/// trailing zeros removed.
pub fn format_sig(v: f64, digits: usize) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
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

pub fn write_csv(path: &Path, rows: &[Row]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.problem.clone(),
            r.method.clone(),
            r.depth.to_string(),
            r.tau.to_string(),
            r.trial.to_string(),
            r.split.clone(),
            r.excess_cost.map(|e| format_sig(e, 6)).unwrap_or_default(),
            r.n_trees.to_string(),
            r.stop_reason.clone(),
            format!("{:.3}", r.runtime_s),
        ])?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_csv(path: &Path) -> anyhow::Result<Vec<Row>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    anyhow::ensure!(header == CSV_HEADER, "{}: unexpected header {header:?}", path.display());
    r.deserialize()
        .map(|row| row.with_context(|| format!("parsing {}", path.display())))
        .collect()
}
