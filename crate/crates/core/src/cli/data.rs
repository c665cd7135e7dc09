//! CSV ingestion: header required, comma separated, `.` decimal.

use std::io::Read;

use crate::error::{Error, Result};
use crate::types::RegressionSample;

/// Which columns play which role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub outcome: String,
    pub focal: String,
    pub covariates: Vec<String>,
    /// Prepend a constant to the covariates.
    pub intercept: bool,
}

impl ColumnMap {
    /// Names of the covariate coefficients, in the order of `z`.
    pub fn covariate_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.covariates.len() + 1);
        if self.intercept {
            names.push("intercept".to_string());
        }
        names.extend(self.covariates.iter().cloned());
        names
    }
}

/// Reads the mapped columns. Errors carry the 1-based line of the offending row.
pub fn read_sample<R: Read>(input: R, map: &ColumnMap) -> Result<RegressionSample> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Input(format!("cannot read header: {e}")))?
        .clone();
    let find = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| {
            Error::Input(format!(
                "column '{name}' not found; available: {}",
                headers.iter().collect::<Vec<_>>().join(", ")
            ))
        })
    };
    let iy = find(&map.outcome)?;
    let ix = find(&map.focal)?;
    let iz: Vec<usize> = map.covariates.iter().map(|c| find(c)).collect::<Result<_>>()?;

    let (mut y, mut x, mut z) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Input(format!("line {line}: malformed row: {e}"))
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let cell = |i: usize| -> Result<f64> {
            let raw = rec.get(i).unwrap_or("").trim();
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    Error::Input(format!(
                        "line {line}, column '{}': '{raw}' is not a finite number",
                        &headers[i]
                    ))
                })
        };
        y.push(cell(iy)?);
        x.push(cell(ix)?);
        let mut row = Vec::with_capacity(iz.len() + 1);
        if map.intercept {
            row.push(1.0);
        }
        for &j in &iz {
            row.push(cell(j)?);
        }
        z.push(row);
    }
    if y.is_empty() {
        return Err(Error::Input("no data rows".into()));
    }
    if z.iter().all(|r| r.is_empty()) {
        z.clear();
    }
    RegressionSample::from_vecs(y, x, z)
}
