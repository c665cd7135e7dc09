//! Serialized results of the `estimate` and `invert-moments` commands.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{estimate, GmmEstimate, GmmFlag, GmmOptions};
use crate::momsolve::kappa_squared;
use crate::types::{CategoricalDistribution, RegressionSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
}

impl Param {
    fn new(name: impl Into<String>, estimate: f64, std_error: f64) -> Self {
        Self {
            name: name.into(),
            estimate,
            std_error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub n: usize,
    pub k: usize,
    pub s_order: usize,
    /// `E(beta)` followed by the covariate coefficients.
    pub phi: Vec<Param>,
    /// `E(beta^r)` and `E(u^r)` from the moment stage.
    pub moments: Vec<Param>,
    /// `E(beta)^2 / E(beta^2)`; absent when `E(beta^2) <= 0`.
    pub kappa_squared: Option<f64>,
    /// `pi_1..pi_K`, `b_1..b_K`, `sigma_2..`; a point mass reports only `b1`.
    pub theta: Vec<Param>,
    /// `b_K / b_1` with a delta-method standard error.
    pub ratio: Option<Param>,
    pub objective: f64,
    pub flags: Vec<GmmFlag>,
}

impl EstimateReport {
    pub fn identified(&self) -> bool {
        !self.flags.contains(&GmmFlag::PiNotIdentified)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Input(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Input(e.to_string()))
    }

    /// Columns `section, parameter, estimate, std_error`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Input(e.to_string());
        w.write_record(["section", "parameter", "estimate", "std_error"]).map_err(io)?;
        let sections = [("phi", &self.phi), ("moments", &self.moments), ("theta", &self.theta)];
        for (section, params) in sections {
            for p in params {
                w.serialize((section, &p.name, p.estimate, p.std_error)).map_err(io)?;
            }
        }
        if let Some(r) = &self.ratio {
            w.serialize(("ratio", &r.name, r.estimate, r.std_error)).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Input(e.to_string()))
    }
}

/// Runs the full estimator and collects every reported quantity.
pub fn estimate_report(
    sample: &RegressionSample,
    covariate_names: &[String],
    k: usize,
    s_order: usize,
    options: &GmmOptions,
) -> Result<EstimateReport> {
    if covariate_names.len() != sample.pz() {
        return Err(Error::Dimension(format!(
            "{} covariate names for {} columns",
            covariate_names.len(),
            sample.pz()
        )));
    }
    let est = estimate(sample, k, s_order, options)?;
    let phi_se = est.phi.std_errors();
    let phi = std::iter::once("E(beta)".to_string())
        .chain(covariate_names.iter().cloned())
        .zip(est.phi.phi.iter().zip(phi_se.iter()))
        .map(|(name, (&v, &se))| Param::new(name, v, se))
        .collect();
    let ms = &est.moment_stage;
    let moments = ms
        .param_names()
        .into_iter()
        .zip(ms.params().into_iter().zip(ms.std_errors()))
        .map(|(name, (v, se))| Param::new(name, v, se))
        .collect();
    Ok(EstimateReport {
        n: sample.n(),
        k,
        s_order,
        phi,
        moments,
        kappa_squared: kappa_squared(&ms.moments).ok(),
        theta: theta_params(&est),
        ratio: ratio(&est),
        objective: est.objective,
        flags: est.flags.clone(),
    })
}

fn theta_params(est: &GmmEstimate) -> Vec<Param> {
    let k = est.theta.k();
    let names = est.param_names();
    let values = est.params();
    let se = est.std_errors();
    let mut out = Vec::with_capacity(values.len() + 1);
    for j in 0..values.len() {
        out.push(Param::new(names[j].clone(), values[j], se[j]));
        if k > 1 && j + 2 == k {
            // pi_K = 1 - sum of the others
            let var: f64 = (0..k - 1)
                .flat_map(|a| (0..k - 1).map(move |b| (a, b)))
                .map(|(a, b)| est.cov[(a, b)])
                .sum();
            out.push(Param::new(format!("pi{k}"), est.theta.pi()[k - 1], var.max(0.0).sqrt()));
        }
    }
    out
}

fn ratio(est: &GmmEstimate) -> Option<Param> {
    let k = est.theta.k();
    if k < 2 {
        return None;
    }
    let (i1, ik) = (k - 1, 2 * k - 2);
    let (b1, bk) = (est.theta.b()[0], est.theta.b()[k - 1]);
    // gradient of b_K / b_1 in (b_1, b_K)
    let (d1, dk) = (-bk / (b1 * b1), 1.0 / b1);
    let c = &est.cov;
    let var = d1 * d1 * c[(i1, i1)] + 2.0 * d1 * dk * c[(i1, ik)] + dk * dk * c[(ik, ik)];
    Some(Param::new(format!("b{k}/b1"), bk / b1, var.max(0.0).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionReport {
    pub k: usize,
    pub moments: Vec<f64>,
    pub pi: Vec<f64>,
    pub b: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

impl InversionReport {
    pub fn new(moments: &[f64], theta: &CategoricalDistribution) -> Self {
        Self {
            k: theta.k(),
            moments: moments.to_vec(),
            pi: theta.pi().to_vec(),
            b: theta.b().to_vec(),
            mean: theta.mean(),
            variance: theta.variance(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Input(e.to_string()))
    }

    /// Columns `category, pi, b`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Input(e.to_string());
        w.write_record(["category", "pi", "b"]).map_err(io)?;
        for (j, (p, b)) in self.pi.iter().zip(&self.b).enumerate() {
            w.serialize((j + 1, p, b)).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Input(e.to_string()))
    }
}
