//! Simulation designs.
//!
//! Every design sets `y_i = x_i beta_i + alpha + gamma_1 z_{i1} + gamma_2 z_{i2} + u_i`
//! with `z_{i1} = x_i + v_{i1}`, `z_{i2} = z_{i1} + v_{i2}` and `v_{ij} ~ N(0, 1)`.
//! Chi-squared variates are sums of squared standard normals.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CategoricalDistribution, RegressionSample};

/// Sub-stream holding the fixed idiosyncratic heterogeneity draws.
const HETERO_SUBSTREAM: u64 = 7;

/// Regressor and error designs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpKind {
    /// `x = (chi2(2) - 2)/2`, `u = sigma_i eps_i`, `sigma_i^2 = 0.5 (1 + chi2(1))`.
    Baseline,
    /// Second half of the sample draws `x = (chi2(4) - 2)/4`.
    CategoricalX,
    /// First half `u = sigma_i eps_i` with `sigma_i^2 ~ chi2(2)`; second half `u = (chi2(2) - 2)/2`.
    CategoricalU,
    /// Baseline regressors and errors with a three-point beta on `(1, 2, 3)`.
    K3,
    /// Baseline plus a fixed `e_i ~ N(0, 1)` added to `u_i` for `i <= floor(n^alpha)`.
    Hetero(f64),
    /// Baseline regressors with `u_i = x_i eps_i`.
    CondHetero,
}

impl fmt::Display for DgpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DgpKind::Baseline => write!(f, "baseline"),
            DgpKind::CategoricalX => write!(f, "categorical_x"),
            DgpKind::CategoricalU => write!(f, "categorical_u"),
            DgpKind::K3 => write!(f, "k3"),
            DgpKind::Hetero(a) => write!(f, "hetero({a})"),
            DgpKind::CondHetero => write!(f, "cond_hetero"),
        }
    }
}

/// Distribution of beta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parametrization {
    /// `(pi, b_L, b_H) = (0.5, 1, 2)`, var(beta) = 0.25.
    High,
    /// `(0.3, 0.5, 1.345)`, var(beta) = 0.15.
    Low,
    /// `(0.3, 0.5, 6)`, var(beta) = 6.3525.
    Var635,
    /// `(0.3, 0.5, 10)`, var(beta) = 18.9525.
    Var1895,
    Custom(CategoricalDistribution),
}

impl fmt::Display for Parametrization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Parametrization::High => write!(f, "high"),
            Parametrization::Low => write!(f, "low"),
            Parametrization::Var635 => write!(f, "var6.35"),
            Parametrization::Var1895 => write!(f, "var18.95"),
            Parametrization::Custom(_) => write!(f, "custom"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub parametrization: Parametrization,
    pub n: usize,
    pub alpha_intercept: f64,
    pub gamma: [f64; 2],
}

impl DgpSpec {
    pub fn new(kind: DgpKind, parametrization: Parametrization, n: usize) -> Result<Self> {
        if n < 10 {
            return Err(Error::Domain(format!("n = {n} below the minimum of 10")));
        }
        if let DgpKind::Hetero(a) = kind {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Domain(format!("heterogeneity degree {a} outside [0, 1]")));
            }
        }
        Ok(Self {
            kind,
            parametrization,
            n,
            alpha_intercept: 0.25,
            gamma: [1.0, 1.0],
        })
    }

    /// True distribution of beta. The K3 design uses its own three-point law unless a
    /// custom one is given.
    pub fn theta(&self) -> CategoricalDistribution {
        let two = |p, l, h| CategoricalDistribution::two_point(p, l, h).expect("valid design");
        match (&self.parametrization, self.kind) {
            (Parametrization::Custom(t), _) => t.clone(),
            (_, DgpKind::K3) => {
                CategoricalDistribution::new(vec![0.3, 0.3, 0.4], vec![1.0, 2.0, 3.0]).expect("valid design")
            }
            (Parametrization::High, _) => two(0.5, 1.0, 2.0),
            (Parametrization::Low, _) => two(0.3, 0.5, 1.345),
            (Parametrization::Var635, _) => two(0.3, 0.5, 6.0),
            (Parametrization::Var1895, _) => two(0.3, 0.5, 10.0),
        }
    }

    /// True `(E(beta), alpha, gamma_1, gamma_2)`.
    pub fn phi(&self) -> [f64; 4] {
        [self.theta().mean(), self.alpha_intercept, self.gamma[0], self.gamma[1]]
    }
}

/// A simulated sample with its latent draws.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSample {
    /// `z` columns are `(1, z_1, z_2)`.
    pub sample: RegressionSample,
    pub beta: Vec<f64>,
    pub u: Vec<f64>,
}

/// Generator for replication `rep` of a study keyed by `seed`.
pub(crate) fn stream(seed: u64, rep: u64, sub: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((rep << 3) | sub);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn chi2(rng: &mut ChaCha8Rng, df: usize) -> f64 {
    (0..df).map(|_| normal(rng).powi(2)).sum()
}

fn draw_beta(rng: &mut ChaCha8Rng, theta: &CategoricalDistribution) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (&p, &b) in theta.pi().iter().zip(theta.b()) {
        acc += p;
        if u < acc {
            return b;
        }
    }
    *theta.b().last().expect("non-empty support")
}

/// `generate_replication(spec, seed, 0)`.
pub fn generate(spec: &DgpSpec, seed: u64) -> SimulatedSample {
    generate_replication(spec, seed, 0)
}

/// Deterministic in `(spec, seed, rep)`.
pub fn generate_replication(spec: &DgpSpec, seed: u64, rep: u64) -> SimulatedSample {
    let n = spec.n;
    let half = n / 2;
    let theta = spec.theta();
    let mut rng = stream(seed, rep, 0);
    let hetero: Vec<f64> = match spec.kind {
        DgpKind::Hetero(a) => {
            let count = ((n as f64).powf(a).floor() as usize).min(n);
            let mut h = stream(seed, 0, HETERO_SUBSTREAM);
            (0..count).map(|_| normal(&mut h)).collect()
        }
        _ => Vec::new(),
    };

    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut z = DMatrix::zeros(n, 3);
    let mut beta = Vec::with_capacity(n);
    let mut u = Vec::with_capacity(n);
    for i in 0..n {
        let second_half = i >= half;
        let xi = match spec.kind {
            DgpKind::CategoricalX if second_half => (chi2(&mut rng, 4) - 2.0) / 4.0,
            _ => (chi2(&mut rng, 2) - 2.0) / 2.0,
        };
        let z1 = xi + normal(&mut rng);
        let z2 = z1 + normal(&mut rng);
        let bi = draw_beta(&mut rng, &theta);
        let ui = match spec.kind {
            DgpKind::CategoricalU if !second_half => chi2(&mut rng, 2).sqrt() * normal(&mut rng),
            DgpKind::CategoricalU => (chi2(&mut rng, 2) - 2.0) / 2.0,
            DgpKind::CondHetero => xi * normal(&mut rng),
            _ => {
                let s2 = 0.5 * (1.0 + chi2(&mut rng, 1));
                s2.sqrt() * normal(&mut rng)
            }
        } + hetero.get(i).copied().unwrap_or(0.0);
        let yi = xi * bi + spec.alpha_intercept + spec.gamma[0] * z1 + spec.gamma[1] * z2 + ui;
        y.push(yi);
        x.push(xi);
        z[(i, 0)] = 1.0;
        z[(i, 1)] = z1;
        z[(i, 2)] = z2;
        beta.push(bi);
        u.push(ui);
    }
    let sample = RegressionSample::new(DVector::from_vec(y), DVector::from_vec(x), z)
        .expect("generated dimensions agree");
    SimulatedSample { sample, beta, u }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn baseline_x_is_standardized() {
        let spec = DgpSpec::new(DgpKind::Baseline, Parametrization::High, 1_000_000).unwrap();
        let s = generate(&spec, 42);
        let x = s.sample.x().as_slice();
        let m = mean(x);
        let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / x.len() as f64;
        assert!(m.abs() < 0.005, "{m}");
        assert!((v - 1.0).abs() < 0.01, "{v}");
        let low = s.beta.iter().filter(|&&b| b == 1.0).count() as f64 / x.len() as f64;
        assert!((low - 0.5).abs() < 0.002, "{low}");
        let u2 = mean(&s.u.iter().map(|u| u * u).collect::<Vec<_>>());
        assert!((u2 - 1.0).abs() < 0.01, "{u2}");
    }

    #[test]
    fn categorical_u_second_moment() {
        // halves have E(u^2) = 2 and 1
        let spec = DgpSpec::new(DgpKind::CategoricalU, Parametrization::High, 1_000_000).unwrap();
        let s = generate(&spec, 3);
        let u2 = mean(&s.u.iter().map(|u| u * u).collect::<Vec<_>>());
        assert!((u2 - 1.5).abs() < 0.01, "{u2}");
    }

    #[test]
    fn deterministic_and_replication_specific() {
        let spec = DgpSpec::new(DgpKind::Baseline, Parametrization::Low, 50).unwrap();
        assert_eq!(generate_replication(&spec, 9, 4), generate_replication(&spec, 9, 4));
        assert_ne!(generate_replication(&spec, 9, 4), generate_replication(&spec, 9, 5));
        assert_ne!(generate_replication(&spec, 9, 4), generate_replication(&spec, 10, 4));
    }

    #[test]
    fn hetero_draws_fixed_across_replications() {
        let base = DgpSpec::new(DgpKind::Baseline, Parametrization::High, 400).unwrap();
        let het = DgpSpec::new(DgpKind::Hetero(0.5), Parametrization::High, 400).unwrap();
        let e_of = |rep| {
            let a = generate_replication(&base, 1, rep);
            let b = generate_replication(&het, 1, rep);
            a.u.iter().zip(&b.u).map(|(x, y)| y - x).collect::<Vec<_>>()
        };
        let e0 = e_of(0);
        let e1 = e_of(3);
        assert!(e0.iter().zip(&e1).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(e0[..20].iter().all(|v| v.abs() > 1e-12));
        assert!(e0[20..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn named_thetas() {
        let k3 = DgpSpec::new(DgpKind::K3, Parametrization::High, 10).unwrap();
        assert_eq!(k3.theta().k(), 3);
        let v = DgpSpec::new(DgpKind::Baseline, Parametrization::Var635, 10).unwrap();
        assert!((v.theta().variance() - 6.3525).abs() < 1e-12);
        let w = DgpSpec::new(DgpKind::Baseline, Parametrization::Var1895, 10).unwrap();
        assert!((w.theta().variance() - 18.9525).abs() < 1e-12);
        let lo = DgpSpec::new(DgpKind::Baseline, Parametrization::Low, 10).unwrap();
        assert!((lo.theta().mean() - 1.0915).abs() < 1e-12);
        assert!(DgpSpec::new(DgpKind::Baseline, Parametrization::High, 9).is_err());
    }
}
