//! CSV and manifest rendering.
//!
//! Numbers are written with `{:.16e}` so every `f64` round-trips exactly.
//! A zero MSD is written as `-inf`; a sweep point with a divergent trial as
//! `divergent`.

use std::fmt::Write as _;

use serde::Serialize;

use super::config::ConfigFile;
use crate::analysis::MsdTrace;
use crate::experiment::{DenoiseOutput, SweepPoint, SweepValue};

pub const DIVERGENT_TOKEN: &str = "divergent";

/// Formats one value for CSV output.
pub fn format_value(x: f64) -> String {
    if x == f64::NEG_INFINITY {
        "-inf".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else {
        format!("{x:.16e}")
    }
}

/// Parses a value written by [`format_value`].
pub fn parse_value(s: &str) -> Option<f64> {
    match s {
        "-inf" => Some(f64::NEG_INFINITY),
        "inf" => Some(f64::INFINITY),
        _ => s.parse().ok(),
    }
}

/// `iteration,msd_db` with one-based rounds.
pub fn learning_curve_csv(trace: &MsdTrace) -> String {
    let mut out = String::from("iteration,msd_db\n");
    for (i, v) in trace.per_iteration_db.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, format_value(*v)).unwrap();
    }
    out
}

/// One column per algorithm; an algorithm without a curve gets `divergent`
/// in every row.
pub fn comparison_csv(horizon: usize, curves: &[(String, Option<&MsdTrace>)]) -> String {
    let mut out = String::from("iteration");
    for (label, _) in curves {
        write!(out, ",{label}").unwrap();
    }
    out.push('\n');
    for i in 0..horizon {
        write!(out, "{}", i + 1).unwrap();
        for (_, trace) in curves {
            match trace {
                Some(t) => write!(out, ",{}", format_value(t.per_iteration_db[i])).unwrap(),
                None => write!(out, ",{DIVERGENT_TOKEN}").unwrap(),
            }
        }
        out.push('\n');
    }
    out
}

/// `param,steady_state_db` for one algorithm across a sweep.
pub fn sweep_csv(points: &[SweepPoint], label: &str) -> String {
    let mut out = String::from("param,steady_state_db\n");
    for p in points {
        let value = match p.get(label) {
            Some(SweepValue::SteadyState(v)) => format_value(v),
            _ => DIVERGENT_TOKEN.to_string(),
        };
        writeln!(out, "{},{}", format_value(p.param), value).unwrap();
    }
    out
}

/// `t,noisy,filtered,residual` with zero-based sample index.
pub fn denoise_csv(output: &DenoiseOutput) -> String {
    let mut out = String::from("t,noisy,filtered,residual\n");
    for t in 0..output.len() {
        writeln!(
            out,
            "{},{},{},{}",
            t,
            format_value(output.noisy[t]),
            format_value(output.filtered[t]),
            format_value(output.residual[t])
        )
        .unwrap();
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgorithmSummary {
    pub label: String,
    pub trials: usize,
    pub divergent_trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steady_state_db: Option<f64>,
}

/// Everything needed to rerun a command: the resolved configuration plus
/// the command-line choices.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub base_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub algorithms: Vec<AlgorithmSummary>,
    pub config: ConfigFile,
}

impl Manifest {
    pub fn new(command: &str, config: &ConfigFile) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            base_seed: config.run.base_seed,
            param: None,
            grid: None,
            node: None,
            outputs: Vec::new(),
            algorithms: Vec::new(),
            config: config.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("manifest is always serializable")
    }
}
