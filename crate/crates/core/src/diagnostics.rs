//! Iteration traces, rate fits, named checks and the run report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::constants::Constants;
use crate::error::{Error, Result};

pub const DEFAULT_BURN_IN: usize = 3;

/// Per-iteration record of a successive-approximation loop. Entry `n` in
/// each sequence refers to the transition from iterate `n` to `n + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub sup_deltas: Vec<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub tol: f64,
    /// `max_n max_x (x_{n+1} - x_n)`; at most `0` for a nonincreasing sequence.
    pub max_rise: f64,
    /// `max_n max_x (x_n - x_{n+1})`; at most `0` for a nondecreasing sequence.
    pub max_drop: f64,
}

impl IterationTrace {
    pub fn new(tol: f64) -> IterationTrace {
        IterationTrace {
            sup_deltas: Vec::new(),
            residuals: Vec::new(),
            iterations: 0,
            converged: false,
            tol,
            max_rise: 0.0,
            max_drop: 0.0,
        }
    }

    pub fn push(&mut self, delta: f64, residual: f64, rise: f64, drop: f64) {
        self.sup_deltas.push(delta);
        self.residuals.push(residual);
        self.iterations += 1;
        self.max_rise = self.max_rise.max(rise);
        self.max_drop = self.max_drop.max(drop);
    }

    /// Rate summary without the full sequences, for compact reports.
    pub fn summary(&self) -> IterationTrace {
        let keep = 64.min(self.iterations);
        IterationTrace {
            sup_deltas: self.sup_deltas[..keep].to_vec(),
            residuals: self.residuals[..keep].to_vec(),
            ..self.clone()
        }
    }
}

/// Least-squares slope of `ln d_n` against `n` for `n >= burn_in`,
/// exponentiated. Zero deltas (exact convergence) are skipped.
pub fn fit_geometric_rate(trace: &IterationTrace, burn_in: usize) -> Result<f64> {
    let need = burn_in + 3;
    if trace.sup_deltas.len() <= need {
        return Err(Error::InsufficientIterations {
            have: trace.sup_deltas.len(),
            need,
        });
    }
    let points: Vec<(f64, f64)> = trace
        .sup_deltas
        .iter()
        .enumerate()
        .skip(burn_in)
        .filter(|(_, d)| **d > 0.0)
        .map(|(n, d)| (n as f64, d.ln()))
        .collect();
    if points.len() < 2 {
        return Err(Error::InsufficientIterations {
            have: points.len(),
            need: 2,
        });
    }
    let len = points.len() as f64;
    let mean_n = points.iter().map(|p| p.0).sum::<f64>() / len;
    let mean_l = points.iter().map(|p| p.1).sum::<f64>() / len;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (n, l) in &points {
        sxy += (n - mean_n) * (l - mean_l);
        sxx += (n - mean_n) * (n - mean_n);
    }
    Ok((sxy / sxx).exp())
}

/// A named pass/fail outcome with the measured quantity and its threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub passed: bool,
    pub measured: Option<f64>,
    pub threshold: Option<f64>,
    /// The property this check embodies.
    pub anchor: String,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl Check {
    /// Passes iff `measured <= threshold`.
    pub fn at_most(anchor: &str, measured: f64, threshold: f64) -> Check {
        Check {
            passed: measured <= threshold,
            measured: finite(measured),
            threshold: finite(threshold),
            anchor: anchor.to_string(),
        }
    }

    /// Passes iff `measured >= threshold`.
    pub fn at_least(anchor: &str, measured: f64, threshold: f64) -> Check {
        Check {
            passed: measured >= threshold,
            measured: finite(measured),
            threshold: finite(threshold),
            anchor: anchor.to_string(),
        }
    }

    pub fn flag(anchor: &str, passed: bool) -> Check {
        Check {
            passed,
            measured: None,
            threshold: None,
            anchor: anchor.to_string(),
        }
    }
}

/// Output of one stage of a run, tagged with the configuration it came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportPart {
    pub config_hash: String,
    pub constants: Option<Constants>,
    pub validations: BTreeMap<String, serde_json::Value>,
    pub traces: BTreeMap<String, IterationTrace>,
    pub checks: BTreeMap<String, Check>,
}

impl ReportPart {
    pub fn new(config_hash: &str) -> ReportPart {
        ReportPart {
            config_hash: config_hash.to_string(),
            ..ReportPart::default()
        }
    }

    pub fn validation<T: Serialize>(&mut self, name: &str, report: &T) -> Result<()> {
        self.validations.insert(name.to_string(), serde_json::to_value(report)?);
        Ok(())
    }

    pub fn check(&mut self, name: &str, check: Check) {
        self.checks.insert(name.to_string(), check);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: serde_json::Value,
    pub config_hash: String,
    pub version: String,
    /// Seconds since the Unix epoch; the only run-dependent field.
    pub timestamp: String,
}

impl Provenance {
    pub fn now(config: serde_json::Value, config_hash: &str) -> Provenance {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Provenance {
            config,
            config_hash: config_hash.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: secs.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub constants: Option<Constants>,
    pub validations: BTreeMap<String, serde_json::Value>,
    pub traces: BTreeMap<String, IterationTrace>,
    pub checks: BTreeMap<String, Check>,
    pub provenance: Provenance,
}

impl RunReport {
    pub fn all_passed(&self) -> bool {
        self.checks.values().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|(_, c)| !c.passed)
            .map(|(k, _)| k.as_str())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<RunReport> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Merges parts into one report. Parts must share the provenance's
/// configuration hash; later parts override earlier entries of the same name.
pub fn compose_report(parts: Vec<ReportPart>, provenance: Provenance) -> Result<RunReport> {
    let mut report = RunReport {
        constants: None,
        validations: BTreeMap::new(),
        traces: BTreeMap::new(),
        checks: BTreeMap::new(),
        provenance,
    };
    for part in parts {
        if part.config_hash != report.provenance.config_hash {
            return Err(Error::ConfigMismatch(
                report.provenance.config_hash.clone(),
                part.config_hash,
            ));
        }
        if part.constants.is_some() {
            report.constants = part.constants;
        }
        report.validations.extend(part.validations);
        report.traces.extend(part.traces);
        report.checks.extend(part.checks);
    }
    Ok(report)
}
