//! First-stage least squares for `phi = (E(beta), gamma')'` with
//! heteroskedasticity-robust covariance.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::types::{PhiEstimate, RegressionSample};

/// Smallest admissible eigenvalue of `Q_{n,ww}`.
pub const EIGEN_FLOOR: f64 = 1e-10;

pub fn estimate_phi(sample: &RegressionSample) -> Result<PhiEstimate> {
    least_squares(&sample.design(), sample.y())
}

/// Least squares of `y` on the rows of `w`, with sandwich covariance `Q^-1 V Q^-1 / n`.
pub fn least_squares(w: &DMatrix<f64>, y: &DVector<f64>) -> Result<PhiEstimate> {
    let n = w.nrows();
    let p = w.ncols();
    if y.len() != n {
        return Err(Error::Dimension(format!("y has {} rows, design has {n}", y.len())));
    }
    if n <= p {
        return Err(Error::Domain(format!(
            "need more observations ({n}) than regressors ({p})"
        )));
    }
    let nf = n as f64;
    let q_ww = w.tr_mul(w) / nf;
    let q_wy = w.tr_mul(y) / nf;

    let min_eig = q_ww
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if !(min_eig > EIGEN_FLOOR) {
        return Err(Error::SingularDesign { eigenvalue: min_eig });
    }
    let chol = factor(&q_ww, min_eig)?;
    let phi = chol.solve(&q_wy);
    let residuals = y - w * &phi;

    let mut v_wxi = DMatrix::zeros(p, p);
    for i in 0..n {
        let wi = w.row(i).transpose();
        v_wxi.ger(residuals[i] * residuals[i], &wi, &wi, 1.0);
    }
    v_wxi /= nf;
    let q_inv = chol.inverse();
    let mut cov = &q_inv * v_wxi * &q_inv / nf;
    cov = (&cov + cov.transpose()) * 0.5;

    Ok(PhiEstimate {
        phi,
        cov,
        residuals,
        q_ww,
    })
}

fn factor(q: &DMatrix<f64>, min_eig: f64) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(q.clone()).ok_or(Error::SingularDesign { eigenvalue: min_eig })
}

/// `y_i - z_i' gamma`.
pub fn detilde(sample: &RegressionSample, gamma: &DVector<f64>) -> Result<DVector<f64>> {
    if gamma.len() != sample.pz() {
        return Err(Error::Dimension(format!(
            "gamma has length {}, sample has {} covariates",
            gamma.len(),
            sample.pz()
        )));
    }
    if sample.pz() == 0 {
        return Ok(sample.y().clone());
    }
    Ok(sample.y() - sample.z() * gamma)
}
