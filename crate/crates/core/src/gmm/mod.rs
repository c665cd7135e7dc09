//! Two-step efficient GMM for the categorical distribution of beta and the error
//! moments, and for the raw moments of beta directly.
//!
//! [`estimate`] runs the staged algorithm:
//!
//! 1. least squares for `(E(beta), gamma)` and `ytilde = y - z' gamma_hat`;
//! 2. closed-form starting moments from [`momsolve`](crate::momsolve);
//! 3. two-step GMM over the raw moments `(m, sigma)`;
//! 4. minimum-distance projection of `m_hat` onto `{h(theta)}` for a starting `theta`;
//! 5. two-step GMM over `(theta, sigma)` with ordering and simplex constraints
//!    imposed through [`reparam`].
//!
//! Each two-step stage weights with the inverse moment covariance at the starting
//! value, minimizes, re-weights at the minimizer and minimizes once more.

mod optimize;
mod reparam;
pub mod stack;
pub mod variance;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::catdist::invert_general;
use crate::error::{Error, Result};
use crate::momsolve::{build_rho_table, solve_moments, MomentWarning};
use crate::ols::estimate_phi;
use crate::types::{CategoricalDistribution, MomentSet, PhiEstimate, RegressionSample};
use optimize::{levenberg_marquardt, nelder_mead, Minimum};
use reparam::{SigmaBox, ThetaReparam};
use stack::{g_bar, jac_eta, jac_moments, jac_theta_moments, theta_moments};
use variance::{psi_rows, sandwich, weighting_at};

pub use stack::{default_s_order, moment_vector, MomentStack, StackData};
pub use variance::{weighting_matrix, Weighting};

/// Warnings attached to an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GmmFlag {
    /// var(beta) is below the homogeneity cutoff; theta is reported as a point mass.
    PiNotIdentified,
    /// The moment covariance was ill-conditioned and regularized before inversion.
    RegularizedWeighting,
    /// Some error moment sits on its box constraint.
    SigmaAtBound,
    /// Some probability is within 1e-6 of zero.
    ProbabilityAtBoundary,
    /// The moment estimate had no exact categorical inverse; projection used fallback starts.
    ProjectionFallback,
    /// The closed-form starting value for `E(u^2)` was negative and clamped to zero.
    NegativeErrorVariance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmOptions {
    /// Objective evaluations allowed per simplex search.
    pub max_evaluations: usize,
    /// Relative tolerance on the spread of simplex objective values.
    pub tolerance: f64,
    /// `var(beta) < homogeneity_tol * E(beta)^2` reports a point mass.
    pub homogeneity_tol: f64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 10_000,
            tolerance: 1e-10,
            homogeneity_tol: 1e-4,
        }
    }
}

/// GMM estimate of the raw moments `(m_1..m_{2K-1}, sigma_2..sigma_{2K-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentGmmEstimate {
    pub moments: MomentSet,
    pub objective: f64,
    pub weighting: DMatrix<f64>,
    /// Covariance of `(m, sigma)` divided by n.
    pub cov: DMatrix<f64>,
    pub evaluations: usize,
    pub flags: Vec<GmmFlag>,
}

impl MomentGmmEstimate {
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.moments.m.clone();
        p.extend(&self.moments.sigma);
        p
    }

    pub fn param_names(&self) -> Vec<String> {
        let nm = self.moments.m.len();
        (1..=nm)
            .map(|r| format!("m{r}"))
            .chain((2..=nm).map(|r| format!("sigma{r}")))
            .collect()
    }

    pub fn std_errors(&self) -> Vec<f64> {
        self.cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

/// GMM estimate of `eta = (pi_1..pi_{K-1}, b_1..b_K, sigma_2..sigma_{2K-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmEstimate {
    pub theta: CategoricalDistribution,
    pub sigma: Vec<f64>,
    /// `g_n' A_n g_n` at the estimate.
    pub objective: f64,
    pub weighting: DMatrix<f64>,
    /// Covariance of [`GmmEstimate::params`] divided by n.
    pub cov: DMatrix<f64>,
    /// Euclidean norm of the objective gradient in `eta`.
    pub gradient_norm: f64,
    /// Objective evaluations across all optimization stages.
    pub iterations: usize,
    pub flags: Vec<GmmFlag>,
    pub stack: MomentStack,
    pub phi: PhiEstimate,
    /// Stage-3 estimate of the raw moments.
    pub moment_stage: MomentGmmEstimate,
}

impl GmmEstimate {
    /// `eta`, with the probabilities of a K-point theta followed by its support.
    pub fn params(&self) -> Vec<f64> {
        let k = self.theta.k();
        let mut p = self.theta.pi()[..k - 1].to_vec();
        p.extend(self.theta.b());
        p.extend(&self.sigma);
        p
    }

    pub fn param_names(&self) -> Vec<String> {
        let k = self.theta.k();
        (1..k)
            .map(|j| format!("pi{j}"))
            .chain((1..=k).map(|j| format!("b{j}")))
            .chain((2..=self.sigma.len() + 1).map(|r| format!("sigma{r}")))
            .collect()
    }

    pub fn std_errors(&self) -> Vec<f64> {
        self.cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }

    pub fn has_flag(&self, flag: GmmFlag) -> bool {
        self.flags.contains(&flag)
    }
}

/// Map from optimizer coordinates to `(m, sigma)` and its derivatives.
trait Coordinates {
    fn moments(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>);
    /// `d g_bar / d u`.
    fn jacobian(&self, data: &StackData, stack: &MomentStack, u: &[f64]) -> DMatrix<f64>;
    fn eta(&self, u: &[f64]) -> Vec<f64>;
}

/// `u = (m_1..m_{2K-1}, v_2..v_{2K-1})`.
struct MomentCoords {
    nm: usize,
    sigma: SigmaBox,
}

impl Coordinates for MomentCoords {
    fn moments(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (u[..self.nm].to_vec(), self.sigma.to_sigma(&u[self.nm..]))
    }

    fn jacobian(&self, data: &StackData, stack: &MomentStack, u: &[f64]) -> DMatrix<f64> {
        let (m, s) = self.moments(u);
        let mut g = jac_moments(data, stack, &m, &s);
        for (q, d) in self.sigma.derivative(&u[self.nm..]).iter().enumerate() {
            g.column_mut(self.nm + q).scale_mut(*d);
        }
        g
    }

    fn eta(&self, u: &[f64]) -> Vec<f64> {
        let (mut m, s) = self.moments(u);
        m.extend(s);
        m
    }
}

struct ThetaCoords(ThetaReparam);

impl Coordinates for ThetaCoords {
    fn moments(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (pi, b, s) = self.0.to_params(u);
        (theta_moments(&pi, &b, 2 * self.0.k - 1), s)
    }

    fn jacobian(&self, data: &StackData, stack: &MomentStack, u: &[f64]) -> DMatrix<f64> {
        let (pi, b, s) = self.0.to_params(u);
        jac_eta(data, stack, &pi, &b, &s) * self.0.jacobian(u)
    }

    fn eta(&self, u: &[f64]) -> Vec<f64> {
        self.0.eta(u)
    }
}

fn objective(data: &StackData, stack: &MomentStack, a: &DMatrix<f64>, m: &[f64], s: &[f64]) -> f64 {
    let g = g_bar(data, stack, m, s);
    g.dot(&(a * &g))
}

/// Simplex search, then Levenberg-Marquardt on the whitened residuals `L' g`.
fn minimize(
    data: &StackData,
    stack: &MomentStack,
    a: &DMatrix<f64>,
    coords: &dyn Coordinates,
    u0: &[f64],
    options: &GmmOptions,
) -> Result<Minimum> {
    let lt = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("weighting matrix not positive definite".into()))?
        .l()
        .transpose();
    let f = |u: &[f64]| {
        let (m, s) = coords.moments(u);
        objective(data, stack, a, &m, &s)
    };
    let nm = nelder_mead(f, u0, 0.1, options.max_evaluations, options.tolerance);
    let rj = |u: &[f64]| {
        let (m, s) = coords.moments(u);
        let r = &lt * g_bar(data, stack, &m, &s);
        let j = &lt * coords.jacobian(data, stack, u);
        if r.iter().chain(j.iter()).all(|v| v.is_finite()) {
            Some((r, j))
        } else {
            None
        }
    };
    let lm = levenberg_marquardt(rj, &nm.x, 200);
    let evaluations = nm.evaluations + lm.evaluations;
    let converged = nm.converged || lm.converged;
    let best = if lm.f < nm.f { lm } else { nm };
    if !converged || !best.f.is_finite() {
        return Err(Error::NotConverged {
            evaluations,
            objective: best.f,
            best: coords.eta(&best.x),
        });
    }
    Ok(Minimum {
        evaluations,
        converged,
        ..best
    })
}

struct StageResult {
    u: Vec<f64>,
    objective: f64,
    weighting: DMatrix<f64>,
    evaluations: usize,
    regularized: bool,
}

/// Weight at the start, minimize, re-weight at the minimizer, minimize again.
fn two_step(
    data: &StackData,
    stack: &MomentStack,
    coords: &dyn Coordinates,
    u0: &[f64],
    options: &GmmOptions,
) -> Result<StageResult> {
    let (m0, s0) = coords.moments(u0);
    let w1 = weighting_at(data, stack, &m0, &s0)?;
    let first = minimize(data, stack, &w1.matrix, coords, u0, options)?;
    let (m1, s1) = coords.moments(&first.x);
    let w2 = weighting_at(data, stack, &m1, &s1)?;
    let second = minimize(data, stack, &w2.matrix, coords, &first.x, options)?;
    Ok(StageResult {
        u: second.x,
        objective: second.f,
        weighting: w2.matrix,
        evaluations: first.evaluations + second.evaluations,
        regularized: w1.regularized || w2.regularized,
    })
}

struct Prepared {
    phi: PhiEstimate,
    stack: MomentStack,
    data: StackData,
    start: MomentSet,
    flags: Vec<GmmFlag>,
}

fn prepare(sample: &RegressionSample, k: usize, s_order: usize) -> Result<Prepared> {
    let stack = MomentStack::new(k, s_order)?;
    let phi = estimate_phi(sample)?;
    let data = StackData::new(sample, &phi.gamma(), &stack)?;
    let rho = build_rho_table(&data.ytilde, &data.x, k, s_order)?;
    let sol = solve_moments(&rho, k, phi.mean_beta())?;
    let mut flags = Vec::new();
    if sol
        .warnings
        .iter()
        .any(|w| matches!(w, MomentWarning::NegativeErrorVariance(_)))
    {
        flags.push(GmmFlag::NegativeErrorVariance);
    }
    Ok(Prepared {
        phi,
        stack,
        data,
        start: sol.moments,
        flags,
    })
}

fn moment_stage(sample: &RegressionSample, p: &Prepared, options: &GmmOptions) -> Result<MomentGmmEstimate> {
    let nm = p.stack.max_r();
    let coords = MomentCoords {
        nm,
        sigma: SigmaBox::from_scale(p.data.ytilde_sd(), nm),
    };
    let mut u0 = p.start.m.clone();
    u0.extend(coords.sigma.from_sigma(&p.start.sigma));
    let stage = two_step(&p.data, &p.stack, &coords, &u0, options)?;
    let (m, sigma) = coords.moments(&stage.u);
    let g = jac_moments(&p.data, &p.stack, &m, &sigma);
    let psi = psi_rows(&p.data, &p.stack, sample, &p.phi, &m, &sigma)?;
    let cov = sandwich(&g, &stage.weighting, &psi)?;
    let mut flags = p.flags.clone();
    if stage.regularized {
        flags.push(GmmFlag::RegularizedWeighting);
    }
    if coords.sigma.at_bound(&sigma) {
        flags.push(GmmFlag::SigmaAtBound);
    }
    Ok(MomentGmmEstimate {
        moments: MomentSet::new(m, sigma, p.stack.k())?,
        objective: stage.objective,
        weighting: stage.weighting,
        cov,
        evaluations: stage.evaluations,
        flags,
    })
}

/// Stages 1 to 3 only: GMM over the raw moments of beta and the error.
pub fn estimate_moments(
    sample: &RegressionSample,
    k: usize,
    s_order: usize,
    options: &GmmOptions,
) -> Result<MomentGmmEstimate> {
    let p = prepare(sample, k, s_order)?;
    moment_stage(sample, &p, options)
}

/// Minimum-distance projection `min_theta sum_r (h(theta)_r - m_hat_r)^2`.
/// Returns the exact inverse when one exists, flagged `false`.
pub fn project_moments(
    m_hat: &[f64],
    k: usize,
    options: &GmmOptions,
) -> Result<(CategoricalDistribution, bool)> {
    if let Ok(theta) = invert_general(m_hat, k) {
        if theta.pi().iter().all(|&p| p > 1e-9) {
            return Ok((theta, false));
        }
    }
    let r_max = 2 * k - 1;
    let rp = ThetaReparam {
        k,
        sigma: SigmaBox { max: vec![] },
    };
    let target = DVector::from_column_slice(m_hat);
    let mean = m_hat[0];
    let sd = (m_hat[1] - mean * mean).abs().sqrt().max(1e-3 * (1.0 + mean.abs()));
    let f = |u: &[f64]| {
        let (pi, b, _) = rp.to_params(u);
        let h = DVector::from_vec(theta_moments(&pi, &b, r_max));
        (h - &target).norm_squared()
    };
    let rj = |u: &[f64]| {
        let (pi, b, _) = rp.to_params(u);
        let r = DVector::from_vec(theta_moments(&pi, &b, r_max)) - &target;
        let j = jac_theta_moments(&pi, &b, r_max) * rp.jacobian(u);
        r.iter().all(|v| v.is_finite()).then_some((r, j))
    };
    let mut best: Option<Minimum> = None;
    for spread in [0.5, 1.0, 1.5, 2.0, 3.0] {
        let pi = vec![1.0 / k as f64; k];
        let b: Vec<f64> = (0..k)
            .map(|j| mean + sd * spread * (2.0 * j as f64 / (k - 1) as f64 - 1.0))
            .collect();
        let u0 = rp.from_params(&pi, &b, &[]);
        let nm = nelder_mead(f, &u0, 0.1, options.max_evaluations, options.tolerance);
        let lm = levenberg_marquardt(rj, &nm.x, 200);
        let cand = if lm.f < nm.f { lm } else { nm };
        if best.as_ref().is_none_or(|b| cand.f < b.f) {
            best = Some(cand);
        }
    }
    let best = best.expect("at least one start");
    let (pi, b, _) = rp.to_params(&best.x);
    // the best fit to infeasible moments can sit on the boundary; pull it inside
    let mut pi: Vec<f64> = pi.iter().map(|p| p.max(1e-6)).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    let min_gap = 1e-6 * (1.0 + sd);
    let mut b = b;
    for j in 1..k {
        b[j] = b[j].max(b[j - 1] + min_gap);
    }
    let theta = CategoricalDistribution::new(pi, b).map_err(|e| Error::DegenerateSupport(e.to_string()))?;
    Ok((theta, true))
}

/// Full staged estimator of `(theta, sigma)`.
pub fn estimate(
    sample: &RegressionSample,
    k: usize,
    s_order: usize,
    options: &GmmOptions,
) -> Result<GmmEstimate> {
    let p = prepare(sample, k, s_order)?;
    let ms = moment_stage(sample, &p, options)?;
    let m_hat = &ms.moments.m;
    let var = ms.moments.variance();
    if k == 1 || !(var > options.homogeneity_tol * m_hat[0] * m_hat[0]) {
        return point_mass_estimate(p, ms, k > 1);
    }

    let (theta0, fallback) = project_moments(m_hat, k, options)?;
    let rp = ThetaReparam {
        k,
        sigma: SigmaBox::from_scale(p.data.ytilde_sd(), 2 * k - 1),
    };
    let u0 = rp.from_params(theta0.pi(), theta0.b(), &ms.moments.sigma);
    let coords = ThetaCoords(rp);
    let stage = two_step(&p.data, &p.stack, &coords, &u0, options)?;
    let (pi, b, sigma) = coords.0.to_params(&stage.u);
    let theta = CategoricalDistribution::new(pi.clone(), b.clone())
        .map_err(|e| Error::DegenerateSupport(e.to_string()))?;

    let g_eta = jac_eta(&p.data, &p.stack, &pi, &b, &sigma);
    let m = theta_moments(&pi, &b, 2 * k - 1);
    let psi = psi_rows(&p.data, &p.stack, sample, &p.phi, &m, &sigma)?;
    let cov = sandwich(&g_eta, &stage.weighting, &psi)?;
    let gbar = g_bar(&p.data, &p.stack, &m, &sigma);
    let gradient_norm = (g_eta.tr_mul(&(&stage.weighting * gbar)) * 2.0).norm();

    let mut flags = p.flags.clone();
    if stage.regularized || ms.flags.contains(&GmmFlag::RegularizedWeighting) {
        flags.push(GmmFlag::RegularizedWeighting);
    }
    if coords.0.sigma.at_bound(&sigma) {
        flags.push(GmmFlag::SigmaAtBound);
    }
    if pi.iter().any(|&v| v < 1e-6) {
        flags.push(GmmFlag::ProbabilityAtBoundary);
    }
    if fallback {
        flags.push(GmmFlag::ProjectionFallback);
    }
    Ok(GmmEstimate {
        theta,
        sigma,
        objective: stage.objective,
        weighting: stage.weighting,
        cov,
        gradient_norm,
        iterations: ms.evaluations + stage.evaluations,
        flags,
        stack: p.stack,
        phi: p.phi,
        moment_stage: ms,
    })
}

/// Point mass at `m_hat_1`, with covariance of `(m_1, sigma)` from the moment stage.
fn point_mass_estimate(p: Prepared, ms: MomentGmmEstimate, flagged: bool) -> Result<GmmEstimate> {
    let nm = ms.moments.m.len();
    let keep: Vec<usize> = std::iter::once(0).chain(nm..2 * nm - 1).collect();
    let cov = DMatrix::from_fn(keep.len(), keep.len(), |i, j| ms.cov[(keep[i], keep[j])]);
    let theta = CategoricalDistribution::point_mass(ms.moments.m[0])?;
    let mut flags = ms.flags.clone();
    if flagged {
        flags.push(GmmFlag::PiNotIdentified);
    }
    Ok(GmmEstimate {
        theta,
        sigma: ms.moments.sigma.clone(),
        objective: ms.objective,
        weighting: ms.weighting.clone(),
        cov,
        gradient_norm: 0.0,
        iterations: ms.evaluations,
        flags,
        stack: p.stack,
        phi: p.phi,
        moment_stage: ms,
    })
}

/// Sandwich covariance of `eta` (divided by n) at a K-point estimate.
pub fn variance_estimate(
    sample: &RegressionSample,
    estimate: &GmmEstimate,
    phi: &PhiEstimate,
    stack: &MomentStack,
) -> Result<DMatrix<f64>> {
    let k = estimate.theta.k();
    if k != stack.k() {
        return Err(Error::Domain(format!(
            "estimate has {k} categories but the stack expects {}; a point-mass estimate carries its moment-stage covariance",
            stack.k()
        )));
    }
    let data = StackData::new(sample, &phi.gamma(), stack)?;
    let (pi, b) = (estimate.theta.pi(), estimate.theta.b());
    let g = jac_eta(&data, stack, pi, b, &estimate.sigma);
    let m = theta_moments(pi, b, stack.max_r());
    let psi = psi_rows(&data, stack, sample, phi, &m, &estimate.sigma)?;
    sandwich(&g, &estimate.weighting, &psi)
}

/// `d g_bar_n / d eta` at `(theta, sigma)`, exposed for derivative checks.
pub fn jacobian_eta(
    sample: &RegressionSample,
    gammahat: &DVector<f64>,
    theta: &CategoricalDistribution,
    sigma: &[f64],
    stack: &MomentStack,
) -> Result<DMatrix<f64>> {
    if theta.k() != stack.k() || sigma.len() + 2 != 2 * stack.k() {
        return Err(Error::Dimension("parameters do not match the stack".into()));
    }
    let data = StackData::new(sample, gammahat, stack)?;
    Ok(jac_eta(&data, stack, theta.pi(), theta.b(), sigma))
}
