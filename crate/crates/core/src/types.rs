//! Domain types shared by every estimation stage.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities must sum to one within this tolerance; smaller deviations are renormalized.
pub const PROB_SUM_TOL: f64 = 1e-12;
/// Adjacent support points closer than this are treated as one category.
pub const SUPPORT_GAP_TOL: f64 = 1e-10;

/// One cross-section `y_i = x_i beta_i + z_i' gamma + u_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSample {
    y: DVector<f64>,
    x: DVector<f64>,
    z: DMatrix<f64>,
}

impl RegressionSample {
    pub fn new(y: DVector<f64>, x: DVector<f64>, z: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::Dimension("sample must have at least one row".into()));
        }
        if x.len() != n || z.nrows() != n {
            return Err(Error::Dimension(format!(
                "row counts differ: y={}, x={}, z={}",
                n,
                x.len(),
                z.nrows()
            )));
        }
        let finite = y.iter().chain(x.iter()).chain(z.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain("sample contains non-finite entries".into()));
        }
        Ok(Self { y, x, z })
    }

    /// Sample without homogeneous-slope covariates.
    pub fn without_covariates(y: DVector<f64>, x: DVector<f64>) -> Result<Self> {
        let n = y.len();
        Self::new(y, x, DMatrix::zeros(n, 0))
    }

    pub fn from_vecs(y: Vec<f64>, x: Vec<f64>, z_rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = y.len();
        let pz = z_rows.first().map_or(0, |r| r.len());
        if z_rows.len() != n && !(z_rows.is_empty() && pz == 0) {
            return Err(Error::Dimension(format!(
                "covariate rows {} != {}",
                z_rows.len(),
                n
            )));
        }
        if z_rows.iter().any(|r| r.len() != pz) {
            return Err(Error::Dimension("ragged covariate rows".into()));
        }
        let z = if z_rows.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_fn(n, pz, |i, j| z_rows[i][j])
        };
        Self::new(DVector::from_vec(y), DVector::from_vec(x), z)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn pz(&self) -> usize {
        self.z.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    /// Design matrix `w_i = (x_i, z_i')'` stacked by row.
    pub fn design(&self) -> DMatrix<f64> {
        let n = self.n();
        let pz = self.pz();
        DMatrix::from_fn(n, 1 + pz, |i, j| if j == 0 { self.x[i] } else { self.z[(i, j - 1)] })
    }
}

/// K-point categorical distribution with strictly increasing support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalDistribution {
    pi: Vec<f64>,
    b: Vec<f64>,
}

impl CategoricalDistribution {
    pub fn new(pi: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let k = pi.len();
        if k == 0 {
            return Err(Error::InvalidDistribution("K must be at least 1".into()));
        }
        if b.len() != k {
            return Err(Error::InvalidDistribution(format!(
                "{} probabilities but {} support points",
                k,
                b.len()
            )));
        }
        if pi.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidDistribution("non-finite parameter".into()));
        }
        if k >= 2 && pi.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::InvalidDistribution(format!(
                "probabilities must lie in (0,1): {pi:?}"
            )));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        for w in b.windows(2) {
            if w[1] - w[0] <= SUPPORT_GAP_TOL {
                return Err(Error::InvalidDistribution(format!(
                    "support must be strictly increasing with gap > {SUPPORT_GAP_TOL}: {b:?}"
                )));
            }
        }
        let pi = if k == 1 {
            vec![1.0]
        } else {
            pi.iter().map(|p| p / total).collect()
        };
        Ok(Self { pi, b })
    }

    pub fn point_mass(b: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![b])
    }

    /// Two-point distribution `beta_L` w.p. `pi`, `beta_H` w.p. `1 - pi`.
    pub fn two_point(pi: f64, beta_l: f64, beta_h: f64) -> Result<Self> {
        Self::new(vec![pi, 1.0 - pi], vec![beta_l, beta_h])
    }

    pub fn k(&self) -> usize {
        self.pi.len()
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn mean(&self) -> f64 {
        self.raw_moment(1)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.pi.iter().zip(&self.b).map(|(p, b)| p * (b - m).powi(2)).sum()
    }

    pub fn raw_moment(&self, r: u32) -> f64 {
        self.pi
            .iter()
            .zip(&self.b)
            .map(|(p, b)| p * b.powi(r as i32))
            .sum()
    }
}

/// Raw moments of beta and of the error term, indexed from one and two respectively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    /// `m[r-1] = E(beta^r)` for `r = 1..=2K-1`.
    pub m: Vec<f64>,
    /// `sigma[r-2] = E(u^r)` for `r = 2..=2K-1`.
    pub sigma: Vec<f64>,
    pub k: usize,
}

impl MomentSet {
    pub fn new(m: Vec<f64>, sigma: Vec<f64>, k: usize) -> Result<Self> {
        if k == 0 || m.len() != 2 * k - 1 || sigma.len() + 1 != m.len() {
            return Err(Error::Dimension(format!(
                "K={k} needs {} beta moments and {} error moments, got {} and {}",
                2 * k.max(1) - 1,
                2 * k.max(1) - 2,
                m.len(),
                sigma.len()
            )));
        }
        Ok(Self { m, sigma, k })
    }

    /// `E(beta^r)` with the convention `m_0 = 1`.
    pub fn m(&self, r: usize) -> f64 {
        if r == 0 {
            1.0
        } else {
            self.m[r - 1]
        }
    }

    /// `E(u^r)` with `sigma_0 = 1` and `sigma_1 = 0`.
    pub fn sigma(&self, r: usize) -> f64 {
        match r {
            0 => 1.0,
            1 => 0.0,
            _ => self.sigma[r - 2],
        }
    }

    pub fn variance(&self) -> f64 {
        if self.m.len() < 2 {
            0.0
        } else {
            self.m[1] - self.m[0] * self.m[0]
        }
    }

    /// Invariant violations: negative even moments, negative error variance, negative var(beta).
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, &v) in self.m.iter().enumerate() {
            let r = i + 1;
            if r % 2 == 0 && v < 0.0 {
                out.push(format!("E(beta^{r}) = {v} < 0"));
            }
        }
        if let Some(&s2) = self.sigma.first() {
            if s2 < 0.0 {
                out.push(format!("sigma_2 = {s2} < 0"));
            }
        }
        if self.m.len() >= 2 && self.variance() < 0.0 {
            out.push(format!("var(beta) = {} < 0", self.variance()));
        }
        out
    }
}

/// Least-squares estimate of `phi = (E(beta), gamma')'`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiEstimate {
    pub phi: DVector<f64>,
    /// `V_phi / n`, so the diagonal holds squared standard errors.
    pub cov: DMatrix<f64>,
    pub residuals: DVector<f64>,
    /// `Q_{n,ww} = n^{-1} sum w_i w_i'`.
    pub q_ww: DMatrix<f64>,
}

impl PhiEstimate {
    pub fn mean_beta(&self) -> f64 {
        self.phi[0]
    }

    pub fn gamma(&self) -> DVector<f64> {
        self.phi.rows(1, self.phi.len() - 1).into_owned()
    }

    pub fn std_errors(&self) -> DVector<f64> {
        self.cov.diagonal().map(|v| v.max(0.0).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sample_rejects_mismatch_and_nan() {
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let x = DVector::from_vec(vec![1.0]);
        assert!(RegressionSample::without_covariates(y.clone(), x).is_err());
        let x = DVector::from_vec(vec![1.0, f64::NAN]);
        assert!(RegressionSample::without_covariates(y, x).is_err());
        assert!(RegressionSample::from_vecs(vec![], vec![], vec![]).is_err());
    }

    #[test]
    fn design_prepends_focal_regressor() {
        let s = RegressionSample::from_vecs(
            vec![1.0, 2.0],
            vec![3.0, 4.0],
            vec![vec![1.0, 5.0], vec![1.0, 6.0]],
        )
        .unwrap();
        let w = s.design();
        assert_eq!(w.row(1).iter().copied().collect::<Vec<_>>(), vec![4.0, 1.0, 6.0]);
    }

    #[test]
    fn distribution_basic() {
        let d = CategoricalDistribution::two_point(0.5, 1.0, 2.0).unwrap();
        assert_eq!(d.mean(), 1.5);
        assert!((d.variance() - 0.25).abs() < 1e-15);
        assert!(CategoricalDistribution::point_mass(3.0).is_ok());
        assert!(CategoricalDistribution::new(vec![0.5], vec![1.0]).is_err());
    }

    #[test]
    fn distribution_renormalizes_within_tolerance() {
        let d = CategoricalDistribution::new(vec![0.5 + 4e-13, 0.5], vec![0.0, 1.0]).unwrap();
        assert!((d.pi().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(CategoricalDistribution::new(vec![0.5 + 1e-9, 0.5], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn distribution_rejects_ties() {
        assert!(CategoricalDistribution::new(vec![0.5, 0.5], vec![1.0, 1.0 + 1e-11]).is_err());
        assert!(CategoricalDistribution::new(vec![0.5, 0.5], vec![2.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn distribution_rejects_invalid(
            pi in prop::collection::vec(-1.0f64..2.0, 2..5),
            b in prop::collection::vec(-3.0f64..3.0, 2..5),
        ) {
            let k = pi.len().min(b.len());
            let pi = pi[..k].to_vec();
            let b = b[..k].to_vec();
            let simplex_ok = pi.iter().all(|&p| p > 0.0 && p < 1.0)
                && (pi.iter().sum::<f64>() - 1.0).abs() <= PROB_SUM_TOL;
            let order_ok = b.windows(2).all(|w| w[1] - w[0] > SUPPORT_GAP_TOL);
            let res = CategoricalDistribution::new(pi, b);
            prop_assert_eq!(res.is_ok(), simplex_ok && order_ok);
        }

        #[test]
        fn distribution_rejects_unordered_support(
            raw in prop::collection::vec(0.05f64..1.0, 3),
            b0 in -2.0f64..2.0,
            gap in 0.01f64..1.0,
        ) {
            let total: f64 = raw.iter().sum();
            let pi: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let b = vec![b0, b0 + gap, b0 + gap * 0.5];
            prop_assert!(CategoricalDistribution::new(pi, b).is_err());
        }
    }
}
