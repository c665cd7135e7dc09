//! Replication loop and aggregation.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{generate_replication, DgpSpec};
use super::report::{McReport, ParameterRecord, PowerCurve, PowerPoint, CRITICAL_VALUE};
use crate::error::{Error, Result};
use crate::gmm::{default_s_order, estimate, estimate_moments, GmmOptions};
use crate::ols::estimate_phi;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "CCRM_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Least squares for `(E(beta), alpha, gamma_1, gamma_2)`.
    Ols,
    /// GMM for the categorical distribution `(pi, b)`.
    Gmm,
    /// GMM for the raw moments `E(beta^r)`, `r = 1..=2K-1`.
    MomentGmm,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Ols => "ols",
            Estimator::Gmm => "gmm",
            Estimator::MomentGmm => "moment_gmm",
        }
    }
}

/// Symmetric grid `theta_0 + delta`, `delta` evenly spaced on `[-half_width, half_width]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerGrid {
    pub half_width: f64,
    pub points: usize,
}

impl PowerGrid {
    pub fn deltas(&self) -> Vec<f64> {
        if self.points <= 1 {
            return vec![0.0];
        }
        let step = 2.0 * self.half_width / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                // exact zero at the midpoint of an odd grid
                let d = -self.half_width + step * i as f64;
                if 2 * i + 1 == self.points {
                    0.0
                } else {
                    d
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub replications: usize,
    pub seed: u64,
    pub estimator: Estimator,
    /// Number of categories; defaults to the K of the true distribution.
    pub k: Option<usize>,
    /// Highest x-moment order; defaults to `2K`.
    pub s_order: Option<usize>,
    pub gmm: GmmOptions,
    pub power: Option<PowerGrid>,
}

impl StudyConfig {
    pub fn new(estimator: Estimator, replications: usize, seed: u64) -> Self {
        Self {
            replications,
            seed,
            estimator,
            k: None,
            s_order: None,
            gmm: GmmOptions::default(),
            power: None,
        }
    }

    fn resolved(&self, spec: &DgpSpec) -> (usize, usize) {
        let k = self.k.unwrap_or_else(|| spec.theta().k());
        (k, self.s_order.unwrap_or_else(|| default_s_order(k)))
    }
}

/// Estimates and standard errors of one replication, or `None` when it failed.
pub type ReplicationOutcome = Option<Vec<(f64, f64)>>;

/// Parameter names and true values reported for `spec` under `config`.
pub fn targets(spec: &DgpSpec, config: &StudyConfig) -> (Vec<String>, Vec<f64>) {
    let (k, _) = config.resolved(spec);
    let theta = spec.theta();
    match config.estimator {
        Estimator::Ols => (
            ["E(beta)", "alpha", "gamma1", "gamma2"].map(String::from).to_vec(),
            spec.phi().to_vec(),
        ),
        Estimator::Gmm => {
            let names = (1..k)
                .map(|j| format!("pi{j}"))
                .chain((1..=k).map(|j| format!("b{j}")))
                .collect();
            let mut truth = theta.pi()[..theta.k() - 1].to_vec();
            truth.extend(theta.b());
            (names, truth)
        }
        Estimator::MomentGmm => (
            (1..2 * k).map(|r| format!("m{r}")).collect(),
            (1..2 * k).map(|r| theta.raw_moment(r as u32)).collect(),
        ),
    }
}

fn one_replication(spec: &DgpSpec, config: &StudyConfig, rep: u64) -> ReplicationOutcome {
    let (k, s) = config.resolved(spec);
    let sim = generate_replication(spec, config.seed, rep);
    match config.estimator {
        Estimator::Ols => {
            let est = estimate_phi(&sim.sample).ok()?;
            let se = est.std_errors();
            Some(est.phi.iter().zip(se.iter()).map(|(a, b)| (*a, *b)).collect())
        }
        Estimator::Gmm => {
            let est = estimate(&sim.sample, k, s, &config.gmm).ok()?;
            if est.theta.k() != k {
                return None;
            }
            let se = est.std_errors();
            let p = est.params();
            Some((0..2 * k - 1).map(|j| (p[j], se[j])).collect())
        }
        Estimator::MomentGmm => {
            let est = estimate_moments(&sim.sample, k, s, &config.gmm).ok()?;
            let se = est.std_errors();
            let p = est.params();
            Some((0..2 * k - 1).map(|j| (p[j], se[j])).collect())
        }
    }
}

fn thread_count() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()?
        .trim()
        .parse::<usize>()
        .ok()
        .filter(|&t| t > 0)
}

/// Outcomes of replications `0..R`, in order. Replication `i` depends only on `(seed, i)`.
pub fn run_replications(spec: &DgpSpec, config: &StudyConfig) -> Result<Vec<ReplicationOutcome>> {
    if config.replications == 0 {
        return Err(Error::Domain("at least one replication is required".into()));
    }
    let work = || {
        (0..config.replications as u64)
            .into_par_iter()
            .map(|rep| one_replication(spec, config, rep))
            .collect::<Vec<_>>()
    };
    match thread_count() {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Input(format!("thread pool: {e}")))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

/// Aggregates outcomes in replication order.
pub fn summarize(spec: &DgpSpec, config: &StudyConfig, outcomes: &[ReplicationOutcome]) -> McReport {
    let (names, truth) = targets(spec, config);
    let (k, s) = config.resolved(spec);
    let ok: Vec<&Vec<(f64, f64)>> = outcomes.iter().flatten().collect();
    let failures = outcomes.len() - ok.len();
    let reject = |est: f64, se: f64, null: f64| {
        let t = (est - null).abs() / se;
        // a missing or zero standard error cannot support the null
        !(t <= CRITICAL_VALUE)
    };
    let rate = |j: usize, null: f64| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().filter(|o| reject(o[j].0, o[j].1, null)).count() as f64 / ok.len() as f64
        }
    };
    let records = names
        .iter()
        .zip(&truth)
        .enumerate()
        .map(|(j, (name, &t0))| {
            let r = ok.len() as f64;
            let (mut sum, mut sq) = (0.0, 0.0);
            for o in &ok {
                let d = o[j].0 - t0;
                sum += d;
                sq += d * d;
            }
            let bias = sum / r;
            // guards the invariant rmse >= |bias| against rounding
            let rmse = (sq / r).sqrt().max(bias.abs());
            ParameterRecord {
                parameter: name.clone(),
                true_value: t0,
                bias,
                rmse,
                size: rate(j, t0),
                replications: ok.len(),
                failures,
            }
        })
        .collect();
    let power = match config.power {
        Some(grid) => names
            .iter()
            .zip(&truth)
            .enumerate()
            .map(|(j, (name, &t0))| PowerCurve {
                parameter: name.clone(),
                points: grid
                    .deltas()
                    .into_iter()
                    .map(|d| PowerPoint {
                        theta_delta: t0 + d,
                        rejection_rate: rate(j, t0 + d),
                    })
                    .collect(),
            })
            .collect(),
        None => Vec::new(),
    };
    McReport {
        dgp: spec.kind.to_string(),
        parametrization: spec.parametrization.to_string(),
        n: spec.n,
        estimator: config.estimator.name().to_string(),
        k,
        s_order: s,
        replications: outcomes.len(),
        failures,
        seed: config.seed,
        records,
        power,
        runtime: Default::default(),
    }
}

/// Runs `R` replications of `spec` and aggregates bias, RMSE, size and power.
pub fn run_study(spec: &DgpSpec, config: &StudyConfig) -> Result<McReport> {
    let start = Instant::now();
    let outcomes = run_replications(spec, config)?;
    let mut report = summarize(spec, config, &outcomes);
    report.runtime = start.elapsed();
    Ok(report)
}
