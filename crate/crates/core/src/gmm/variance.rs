//! Efficient weighting matrix and the sandwich covariance with first-stage correction.

use nalgebra::{DMatrix, DVector};

use super::stack::{g_obs, jac_gamma, theta_moments, MomentStack, StackData};
use crate::error::{Error, Result};
use crate::types::{CategoricalDistribution, PhiEstimate, RegressionSample};

/// Condition number above which the inner matrix is regularized.
pub const MAX_CONDITION: f64 = 1e12;

/// `A_n` and whether regularization was needed to form it.
#[derive(Debug, Clone, PartialEq)]
pub struct Weighting {
    pub matrix: DMatrix<f64>,
    pub regularized: bool,
}

/// `[n^-1 sum g_i g_i' - g_bar g_bar']^-1` at preliminary estimates.
pub fn weighting_matrix(
    sample: &RegressionSample,
    gammahat: &DVector<f64>,
    theta: &CategoricalDistribution,
    sigma: &[f64],
    stack: &MomentStack,
) -> Result<Weighting> {
    if theta.k() != stack.k() || sigma.len() + 2 != 2 * stack.k() {
        return Err(Error::Dimension("preliminary estimates do not match the stack".into()));
    }
    let data = StackData::new(sample, gammahat, stack)?;
    let m = theta_moments(theta.pi(), theta.b(), stack.max_r());
    weighting_at(&data, stack, &m, sigma)
}

pub(crate) fn weighting_at(
    data: &StackData,
    stack: &MomentStack,
    m: &[f64],
    sigma: &[f64],
) -> Result<Weighting> {
    let g = g_obs(data, stack, m, sigma);
    // magnitude of the observable terms ytilde^r x^s, against which C counts as zero
    let reference: f64 = stack
        .conditions()
        .iter()
        .map(|&(r, s)| {
            data.ytilde
                .iter()
                .zip(&data.x)
                .map(|(y, x)| (y.powi(r as i32) * x.powi(s as i32)).powi(2))
                .sum::<f64>()
                / data.n as f64
        })
        .sum();
    inverse_covariance(&g, reference)
}

/// Inverse of the centered second-moment matrix of the rows of `g`. A covariance
/// whose trace is below `1e-16 * reference` is treated as zero.
pub(crate) fn inverse_covariance(g: &DMatrix<f64>, reference: f64) -> Result<Weighting> {
    let n = g.nrows() as f64;
    let mean = g.row_mean();
    let centered = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)] - mean[j]);
    let mut c = centered.tr_mul(&centered) / n;
    c = (&c + c.transpose()) * 0.5;
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow("moment covariance is not finite".into()));
    }
    let dim = c.nrows();
    let eig = c.clone().symmetric_eigenvalues();
    let emax = eig.max();
    let emin = eig.min();
    let trace = c.trace();
    let negligible = !(trace > 1e-16 * reference);
    let regularized = negligible || !(emin > 0.0 && emax / emin <= MAX_CONDITION);
    if regularized {
        let base = if negligible { reference.max(1e-300) } else { trace };
        let lambda = 1e-10 * base / dim as f64;
        // eigenvalues may be slightly negative from rounding; shift past them
        let shift = lambda + (-emin).max(0.0);
        for d in 0..dim {
            c[(d, d)] += shift;
        }
    }
    let inv = c
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("moment covariance not positive definite".into()))?
        .inverse();
    Ok(Weighting {
        matrix: (&inv + inv.transpose()) * 0.5,
        regularized,
    })
}

/// Rows `psi_i' = g_i' + (G_gamma L Q^-1 w_i xi_i)'`.
pub(crate) fn psi_rows(
    data: &StackData,
    stack: &MomentStack,
    sample: &RegressionSample,
    phi: &PhiEstimate,
    m: &[f64],
    sigma: &[f64],
) -> Result<DMatrix<f64>> {
    let mut psi = g_obs(data, stack, m, sigma);
    let pz = sample.pz();
    if pz == 0 {
        return Ok(psi);
    }
    let g_gamma = jac_gamma(data, stack, sample.z());
    let q_inv = phi
        .q_ww
        .clone()
        .cholesky()
        .ok_or(Error::SingularDesign { eigenvalue: 0.0 })?
        .inverse();
    // L Q^-1 selects the gamma rows
    let lq = q_inv.rows(1, pz).into_owned();
    let w = sample.design();
    // n x pz influence of gamma-hat, then mapped into moment space
    let mut infl = &w * lq.transpose();
    for i in 0..sample.n() {
        let xi = phi.residuals[i];
        infl.row_mut(i).scale_mut(xi);
    }
    psi += infl * g_gamma.transpose();
    Ok(psi)
}

/// `(G'AG)^-1 G'A V A G (G'AG)^-1 / n` with `V = n^-1 sum psi_i psi_i'`.
pub(crate) fn sandwich(
    g: &DMatrix<f64>,
    a: &DMatrix<f64>,
    psi: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = psi.nrows() as f64;
    let v = psi.tr_mul(psi) / n;
    let ga = g.tr_mul(a);
    let mut h = &ga * g;
    h = (&h + h.transpose()) * 0.5;
    let eig = h.clone().symmetric_eigenvalues();
    let emax = eig.amax();
    if !(eig.min() > 1e-13 * emax) {
        return Err(Error::RankDeficient(format!(
            "smallest eigenvalue {:e}, largest {emax:e}",
            eig.min()
        )));
    }
    let h_inv = h
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("G'AG not positive definite".into()))?
        .inverse();
    let meat = &ga * v * ga.transpose();
    let cov = &h_inv * meat * &h_inv / n;
    Ok((&cov + cov.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_contributions_trigger_regularization() {
        let g = DMatrix::from_fn(20, 3, |_, j| j as f64 + 0.5);
        let w = inverse_covariance(&g, 1.0).unwrap();
        assert!(w.regularized);
        assert!(w.matrix.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn inverse_matches_direct_oracle() {
        // deterministic pseudo-random rows
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let g = DMatrix::from_fn(200, 5, |_, _| next());
        let w = inverse_covariance(&g, 1.0).unwrap();
        assert!(!w.regularized);
        let n = 200.0;
        let mut c = DMatrix::zeros(5, 5);
        for a in 0..5 {
            for b in 0..5 {
                let ma: f64 = g.column(a).sum() / n;
                let mb: f64 = g.column(b).sum() / n;
                c[(a, b)] = (0..200).map(|i| g[(i, a)] * g[(i, b)]).sum::<f64>() / n - ma * mb;
            }
        }
        let prod = &c * &w.matrix;
        assert!((prod - DMatrix::<f64>::identity(5, 5)).amax() < 1e-9);
    }

    #[test]
    fn sandwich_exactly_identified_reduces_to_inverse_jacobian_form() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, -0.3, 1.0]);
        let psi = DMatrix::from_row_slice(4, 2, &[1.0, 0.2, -1.0, 0.4, 0.5, -0.6, -0.5, 0.0]);
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.4, 0.4, 1.0]);
        let cov = sandwich(&g, &a, &psi).unwrap();
        let v = psi.tr_mul(&psi) / 4.0;
        let gi = g.clone().try_inverse().unwrap();
        let direct = &gi * v * gi.transpose() / 4.0;
        assert!((cov - direct).amax() < 1e-12);
    }

    #[test]
    fn sandwich_rank_deficient_jacobian() {
        let g = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let psi = DMatrix::from_fn(10, 3, |i, j| ((i * 3 + j) as f64).sin());
        let a = DMatrix::identity(3, 3);
        assert!(matches!(sandwich(&g, &a, &psi), Err(Error::RankDeficient(_))));
    }
}
