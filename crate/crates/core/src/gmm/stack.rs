//! The stacked moment conditions and their derivatives.
//!
//! Condition `(r, s)` is
//! `g^{(r,s)} = sum_{q=0}^{r} C(r,q) x^{r-q+s} sigma_q m_{r-q} - ytilde^r x^s`
//! with `m_0 = sigma_0 = 1` and `sigma_1 = 0`. Its sample mean is linear in the
//! sample moments `X_j = mean(x^j)` and `Y_{r,s} = mean(ytilde^r x^s)`, so
//! [`StackData`] precomputes those once and every later evaluation is O(dim).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{binom_f, powers};
use crate::ols::detilde;
use crate::types::{CategoricalDistribution, RegressionSample};

/// Ordered index pairs `(r, s)`, `r = 1..=2K-1`, `s = 0..=S-r`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MomentStack {
    k: usize,
    s_order: usize,
    conditions: Vec<(usize, usize)>,
}

impl MomentStack {
    /// Requires `2K <= S <= 4K-2` (for `K = 1`, `S = 2`).
    pub fn new(k: usize, s_order: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain("K must be positive".into()));
        }
        let hi = (4 * k - 2).max(2 * k);
        if s_order < 2 * k || s_order > hi {
            return Err(Error::Domain(format!(
                "S = {s_order} outside [{}, {hi}] for K = {k}",
                2 * k
            )));
        }
        let mut conditions = Vec::new();
        for r in 1..2 * k {
            for s in 0..=s_order - r {
                conditions.push((r, s));
            }
        }
        Ok(Self {
            k,
            s_order,
            conditions,
        })
    }

    /// `S = 2K`.
    pub fn with_default_order(k: usize) -> Result<Self> {
        Self::new(k, default_s_order(k))
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn s_order(&self) -> usize {
        self.s_order
    }

    pub fn conditions(&self) -> &[(usize, usize)] {
        &self.conditions
    }

    pub fn dimension(&self) -> usize {
        self.conditions.len()
    }

    /// Highest beta moment in the stack, `2K - 1`.
    pub fn max_r(&self) -> usize {
        2 * self.k - 1
    }
}

/// Default highest x-moment order: 4 for K = 2, 6 for K = 3.
pub fn default_s_order(k: usize) -> usize {
    2 * k
}

/// Sample quantities needed to evaluate the stack at any parameter value.
#[derive(Debug, Clone)]
pub struct StackData {
    pub(crate) n: usize,
    /// `X_j`, `j = 0..=S`.
    pub(crate) xm: Vec<f64>,
    /// `Y_{r,s}`, `r = 0..=2K-1`, `s = 0..=S`.
    pub(crate) ym: Vec<Vec<f64>>,
    pub(crate) ytilde: Vec<f64>,
    pub(crate) x: Vec<f64>,
}

impl StackData {
    pub fn new(sample: &RegressionSample, gammahat: &DVector<f64>, stack: &MomentStack) -> Result<Self> {
        let ytilde = detilde(sample, gammahat)?;
        Self::from_parts(ytilde.as_slice(), sample.x().as_slice(), stack)
    }

    pub(crate) fn from_parts(ytilde: &[f64], x: &[f64], stack: &MomentStack) -> Result<Self> {
        let n = x.len();
        if n == 0 || ytilde.len() != n {
            return Err(Error::Dimension(format!(
                "ytilde has {} rows, x has {n}",
                ytilde.len()
            )));
        }
        let s_max = stack.s_order;
        let r_max = stack.max_r();
        let mut xm = vec![0.0; s_max + 1];
        let mut ym = vec![vec![0.0; s_max + 1]; r_max + 1];
        for (&yi, &xi) in ytilde.iter().zip(x) {
            let xp = powers(xi, s_max);
            let yp = powers(yi, r_max);
            for (acc, p) in xm.iter_mut().zip(&xp) {
                *acc += p;
            }
            for r in 0..=r_max {
                for s in 0..=s_max - r {
                    ym[r][s] += yp[r] * xp[s];
                }
            }
        }
        let nf = n as f64;
        xm.iter_mut().for_each(|v| *v /= nf);
        ym.iter_mut().flatten().for_each(|v| *v /= nf);
        if let Some(j) = xm.iter().position(|v| !v.is_finite()) {
            return Err(Error::Overflow(format!("sample moment of x^{j}")));
        }
        for (r, row) in ym.iter().enumerate() {
            if let Some(s) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Overflow(format!("sample moment ytilde^{r} x^{s}")));
            }
        }
        Ok(Self {
            n,
            xm,
            ym,
            ytilde: ytilde.to_vec(),
            x: x.to_vec(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Standard deviation of `ytilde`.
    pub(crate) fn ytilde_sd(&self) -> f64 {
        let nf = self.n as f64;
        let mean = self.ytilde.iter().sum::<f64>() / nf;
        let ss: f64 = self.ytilde.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / nf).sqrt()
    }
}

fn mom(m: &[f64], r: usize) -> f64 {
    if r == 0 {
        1.0
    } else {
        m[r - 1]
    }
}

fn sig(sigma: &[f64], q: usize) -> f64 {
    match q {
        0 => 1.0,
        1 => 0.0,
        _ => sigma[q - 2],
    }
}

/// `g_bar` at beta moments `m` (`m_1..m_{2K-1}`) and error moments `sigma` (`sigma_2..`).
pub(crate) fn g_bar(data: &StackData, stack: &MomentStack, m: &[f64], sigma: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        stack.dimension(),
        stack.conditions().iter().map(|&(r, s)| {
            let mut v = -data.ym[r][s];
            for q in 0..=r {
                if q == 1 {
                    continue;
                }
                v += binom_f(r, q) * data.xm[r - q + s] * sig(sigma, q) * mom(m, r - q);
            }
            v
        }),
    )
}

/// Per-observation contributions, one row per observation.
pub(crate) fn g_obs(data: &StackData, stack: &MomentStack, m: &[f64], sigma: &[f64]) -> DMatrix<f64> {
    let dim = stack.dimension();
    let s_max = stack.s_order();
    let r_max = stack.max_r();
    let mut out = DMatrix::zeros(data.n, dim);
    for i in 0..data.n {
        let xp = powers(data.x[i], s_max);
        let yp = powers(data.ytilde[i], r_max);
        for (c, &(r, s)) in stack.conditions().iter().enumerate() {
            let mut v = -yp[r] * xp[s];
            for q in 0..=r {
                if q == 1 {
                    continue;
                }
                v += binom_f(r, q) * xp[r - q + s] * sig(sigma, q) * mom(m, r - q);
            }
            out[(i, c)] = v;
        }
    }
    out
}

/// `d g_bar / d (m_1..m_{2K-1}, sigma_2..sigma_{2K-1})`.
pub(crate) fn jac_moments(data: &StackData, stack: &MomentStack, m: &[f64], sigma: &[f64]) -> DMatrix<f64> {
    let nm = stack.max_r();
    let mut out = DMatrix::zeros(stack.dimension(), 2 * nm - 1);
    for (c, &(r, s)) in stack.conditions().iter().enumerate() {
        for j in 1..=r {
            out[(c, j - 1)] = binom_f(r, r - j) * data.xm[j + s] * sig(sigma, r - j);
        }
        for q in 2..=r {
            out[(c, nm + q - 2)] = binom_f(r, q) * data.xm[r - q + s] * mom(m, r - q);
        }
    }
    out
}

/// `d g_bar / d gamma' = n^-1 sum r ytilde^{r-1} x^s z_i'`.
pub(crate) fn jac_gamma(data: &StackData, stack: &MomentStack, z: &DMatrix<f64>) -> DMatrix<f64> {
    let pz = z.ncols();
    let mut out = DMatrix::zeros(stack.dimension(), pz);
    if pz == 0 {
        return out;
    }
    let r_max = stack.max_r();
    for i in 0..data.n {
        let xp = powers(data.x[i], stack.s_order());
        let yp = powers(data.ytilde[i], r_max);
        for (c, &(r, s)) in stack.conditions().iter().enumerate() {
            let w = r as f64 * yp[r - 1] * xp[s];
            for j in 0..pz {
                out[(c, j)] += w * z[(i, j)];
            }
        }
    }
    out / data.n as f64
}

/// `h(theta)`: raw moments `m_1..m_R` for probabilities `pi` (all K) and support `b`.
pub(crate) fn theta_moments(pi: &[f64], b: &[f64], r_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; r_max];
    for (&p, &bk) in pi.iter().zip(b) {
        let mut pow = 1.0;
        for v in out.iter_mut() {
            pow *= bk;
            *v += p * pow;
        }
    }
    out
}

/// `d h(theta) / d (pi_1..pi_{K-1}, b_1..b_K)` with `pi_K = 1 - sum`.
pub(crate) fn jac_theta_moments(pi: &[f64], b: &[f64], r_max: usize) -> DMatrix<f64> {
    let k = b.len();
    let mut out = DMatrix::zeros(r_max, 2 * k - 1);
    for j in 1..=r_max {
        let jf = j as f64;
        for c in 0..k - 1 {
            out[(j - 1, c)] = b[c].powi(j as i32) - b[k - 1].powi(j as i32);
        }
        for c in 0..k {
            out[(j - 1, k - 1 + c)] = jf * pi[c] * b[c].powi(j as i32 - 1);
        }
    }
    out
}

/// `d g_bar / d eta` with `eta = (pi_1..pi_{K-1}, b_1..b_K, sigma_2..sigma_{2K-1})`.
pub(crate) fn jac_eta(
    data: &StackData,
    stack: &MomentStack,
    pi: &[f64],
    b: &[f64],
    sigma: &[f64],
) -> DMatrix<f64> {
    let r_max = stack.max_r();
    let k = b.len();
    let m = theta_moments(pi, b, r_max);
    let gm = jac_moments(data, stack, &m, sigma);
    let dh = jac_theta_moments(pi, b, r_max);
    let n_theta = 2 * k - 1;
    let n_sigma = r_max - 1;
    let mut out = DMatrix::zeros(stack.dimension(), n_theta + n_sigma);
    out.columns_mut(0, n_theta)
        .copy_from(&(gm.columns(0, r_max) * dh));
    out.columns_mut(n_theta, n_sigma)
        .copy_from(&gm.columns(r_max, n_sigma));
    out
}

/// `g_bar_n(theta, sigma, gammahat)` for a regression sample.
pub fn moment_vector(
    sample: &RegressionSample,
    gammahat: &DVector<f64>,
    theta: &CategoricalDistribution,
    sigma: &[f64],
    stack: &MomentStack,
) -> Result<DVector<f64>> {
    if theta.k() != stack.k() {
        return Err(Error::Dimension(format!(
            "theta has K = {}, stack has K = {}",
            theta.k(),
            stack.k()
        )));
    }
    if sigma.len() != stack.max_r() - 1 {
        return Err(Error::Dimension(format!(
            "need {} error moments, got {}",
            stack.max_r() - 1,
            sigma.len()
        )));
    }
    let data = StackData::new(sample, gammahat, stack)?;
    let m = theta_moments(theta.pi(), theta.b(), stack.max_r());
    let g = g_bar(&data, stack, &m, sigma);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow("moment vector is not finite".into()));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::binomial;

    fn fixture3() -> RegressionSample {
        RegressionSample::from_vecs(
            vec![1.7, -0.4, 3.1],
            vec![0.9, -1.2, 1.6],
            vec![vec![1.0], vec![1.0], vec![1.0]],
        )
        .unwrap()
    }

    #[test]
    fn stack_shape() {
        let st = MomentStack::new(2, 4).unwrap();
        assert_eq!(st.dimension(), 4 + 3 + 2);
        assert_eq!(st.conditions()[0], (1, 0));
        assert_eq!(*st.conditions().last().unwrap(), (3, 1));
        assert!(MomentStack::new(2, 3).is_err());
        assert!(MomentStack::new(2, 7).is_err());
        assert_eq!(MomentStack::new(3, 6).unwrap().dimension(), 6 + 5 + 4 + 3 + 2);
        assert_eq!(MomentStack::new(1, 2).unwrap().dimension(), 2);
        assert_eq!(default_s_order(2), 4);
        assert_eq!(default_s_order(3), 6);
    }

    #[test]
    fn matches_nested_sum_oracle() {
        let s = fixture3();
        let gamma = DVector::from_vec(vec![0.3]);
        let theta = CategoricalDistribution::two_point(0.4, 0.8, 2.2).unwrap();
        let sigma = [1.3, -0.2];
        let st = MomentStack::new(2, 4).unwrap();
        let g = moment_vector(&s, &gamma, &theta, &sigma, &st).unwrap();

        let sig_of = |q: usize| [1.0, 0.0, 1.3, -0.2][q];
        let m_of = |r: usize| theta.raw_moment(r as u32);
        let mut c = 0;
        for r in 1..=3usize {
            for sx in 0..=4 - r {
                let mut acc = 0.0;
                for i in 0..3 {
                    let xi = s.x()[i];
                    let yt = s.y()[i] - 0.3;
                    let mut inner = 0.0;
                    for q in 0..=r {
                        inner += binomial(r as u32, q as u32).unwrap() as f64
                            * xi.powi((r - q + sx) as i32)
                            * sig_of(q)
                            * m_of(r - q);
                    }
                    acc += inner - yt.powi(r as i32) * xi.powi(sx as i32);
                }
                acc /= 3.0;
                assert!((g[c] - acc).abs() < 1e-12, "({r},{sx}): {} vs {acc}", g[c]);
                c += 1;
            }
        }
    }

    #[test]
    fn noiseless_point_mass_is_exact_zero() {
        let x = vec![0.5, -1.0, 2.0, 1.5, -0.3];
        let y: Vec<f64> = x.iter().map(|v| 1.25 * v).collect();
        let s = RegressionSample::without_covariates(DVector::from_vec(y), DVector::from_vec(x)).unwrap();
        let st = MomentStack::new(1, 2).unwrap();
        let theta = CategoricalDistribution::point_mass(1.25).unwrap();
        let g = moment_vector(&s, &DVector::zeros(0), &theta, &[], &st).unwrap();
        assert!(g.amax() < 1e-14);
    }

    #[test]
    fn obs_rows_average_to_g_bar() {
        let s = fixture3();
        let gamma = DVector::from_vec(vec![-0.1]);
        let st = MomentStack::new(2, 4).unwrap();
        let data = StackData::new(&s, &gamma, &st).unwrap();
        let m = [1.2, 2.0, 3.9];
        let sigma = [0.8, 0.1];
        let rows = g_obs(&data, &st, &m, &sigma);
        let mean = rows.row_mean().transpose();
        assert!((mean - g_bar(&data, &st, &m, &sigma)).amax() < 1e-13);
    }

    #[test]
    fn gamma_jacobian_matches_finite_differences() {
        let s = fixture3();
        let st = MomentStack::new(2, 4).unwrap();
        let theta = CategoricalDistribution::two_point(0.4, 0.8, 2.2).unwrap();
        let sigma = [1.3, -0.2];
        let g0 = 0.3;
        let data = StackData::new(&s, &DVector::from_vec(vec![g0]), &st).unwrap();
        let analytic = jac_gamma(&data, &st, s.z());
        let h = 1e-6;
        let up = moment_vector(&s, &DVector::from_vec(vec![g0 + h]), &theta, &sigma, &st).unwrap();
        let dn = moment_vector(&s, &DVector::from_vec(vec![g0 - h]), &theta, &sigma, &st).unwrap();
        let fd = (up - dn) / (2.0 * h);
        for c in 0..st.dimension() {
            assert!((fd[c] - analytic[(c, 0)]).abs() < 1e-6 * (1.0 + fd[c].abs()));
        }
    }

    #[test]
    fn k_mismatch_rejected() {
        let st = MomentStack::new(2, 4).unwrap();
        let theta = CategoricalDistribution::point_mass(1.0).unwrap();
        assert!(moment_vector(&fixture3(), &DVector::zeros(1), &theta, &[0.0, 0.0], &st).is_err());
    }
}
