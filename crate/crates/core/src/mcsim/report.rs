//! Aggregated simulation output and its JSON and CSV encodings.

use std::io::Write;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-sided 5% critical value `Phi^-1(0.975)`.
pub const CRITICAL_VALUE: f64 = 1.959963984540054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRecord {
    pub parameter: String,
    pub true_value: f64,
    pub bias: f64,
    pub rmse: f64,
    /// Rejection rate of the nominal 5% t-test of the true value.
    pub size: f64,
    /// Replications that produced an estimate.
    pub replications: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub theta_delta: f64,
    pub rejection_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub parameter: String,
    pub points: Vec<PowerPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub dgp: String,
    pub parametrization: String,
    pub n: usize,
    pub estimator: String,
    pub k: usize,
    pub s_order: usize,
    /// Requested replications, including failures.
    pub replications: usize,
    pub failures: usize,
    pub seed: u64,
    pub records: Vec<ParameterRecord>,
    pub power: Vec<PowerCurve>,
    /// Wall-clock time; excluded from serialized output so reports are reproducible.
    #[serde(skip)]
    pub runtime: Duration,
}

impl McReport {
    pub fn record(&self, parameter: &str) -> Option<&ParameterRecord> {
        self.records.iter().find(|r| r.parameter == parameter)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Input(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Input(e.to_string()))
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    dgp: &'a str,
    parametrization: &'a str,
    n: usize,
    parameter: &'a str,
    true_value: f64,
    bias: f64,
    rmse: f64,
    size: f64,
    replications: usize,
    failures: usize,
}

/// One row per parameter of each report.
pub fn write_csv<W: Write>(reports: &[McReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rep in reports {
        for r in &rep.records {
            w.serialize(CsvRow {
                dgp: &rep.dgp,
                parametrization: &rep.parametrization,
                n: rep.n,
                parameter: &r.parameter,
                true_value: r.true_value,
                bias: r.bias,
                rmse: r.rmse,
                size: r.size,
                replications: r.replications,
                failures: r.failures,
            })
            .map_err(|e| Error::Input(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| Error::Input(e.to_string()))
}

/// Columns `parameter, theta_delta, rejection_rate`.
pub fn write_power_csv<W: Write>(report: &McReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["parameter", "theta_delta", "rejection_rate"])
        .map_err(|e| Error::Input(e.to_string()))?;
    for curve in &report.power {
        for p in &curve.points {
            w.serialize((&curve.parameter, p.theta_delta, p.rejection_rate))
                .map_err(|e| Error::Input(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| Error::Input(e.to_string()))
}
