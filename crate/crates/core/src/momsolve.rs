//! Sequential identification of `E(beta^r)` and `sigma_r` from moments of `(y~, x)`,
//! plus the kappa-squared homogeneity statistic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{binom_f, powers};
use crate::types::MomentSet;

/// Relative determinant tolerance for the 2x2 identification systems.
pub const DET_TOL: f64 = 1e-10;

/// Sample cross moments `rho[r][s] = n^{-1} sum y~_i^r x_i^s`.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoTable {
    rho: Vec<Vec<f64>>,
}

impl RhoTable {
    /// Wrap a precomputed (e.g. population) table. Row `r` holds `s = 0..`.
    pub fn from_rows(rho: Vec<Vec<f64>>) -> Result<Self> {
        if rho.is_empty() || rho[0].is_empty() {
            return Err(Error::Dimension("empty rho table".into()));
        }
        if rho.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("rho table has non-finite entries".into()));
        }
        Ok(Self { rho })
    }

    pub fn get(&self, r: usize, s: usize) -> f64 {
        self.rho[r][s]
    }

    pub fn max_r(&self) -> usize {
        self.rho.len() - 1
    }

    pub fn max_s(&self) -> usize {
        self.rho[0].len() - 1
    }
}

pub fn build_rho_table(ytilde: &[f64], x: &[f64], k: usize, s_order: usize) -> Result<RhoTable> {
    if ytilde.len() != x.len() {
        return Err(Error::Dimension(format!(
            "y~ has {} entries, x has {}",
            ytilde.len(),
            x.len()
        )));
    }
    if ytilde.is_empty() {
        return Err(Error::Domain("empty sample".into()));
    }
    if k == 0 || s_order < 2 * k {
        return Err(Error::Domain(format!("need K >= 1 and S > 2K-1, got K={k}, S={s_order}")));
    }
    let max_r = 2 * k - 1;
    let max_s = (2 * max_r).max(s_order);
    let mut rho = vec![vec![0.0; max_s + 1]; max_r + 1];
    for (&yv, &xv) in ytilde.iter().zip(x) {
        let yp = powers(yv, max_r);
        let xp = powers(xv, max_s);
        for (r, &ypr) in yp.iter().enumerate() {
            for (s, &xps) in xp.iter().enumerate() {
                rho[r][s] += ypr * xps;
            }
        }
    }
    let n = ytilde.len() as f64;
    for (r, row) in rho.iter_mut().enumerate() {
        for (s, v) in row.iter_mut().enumerate() {
            *v /= n;
            if !v.is_finite() {
                return Err(Error::Overflow(format!("rho[{r}][{s}] is not finite")));
            }
        }
    }
    Ok(RhoTable { rho })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MomentWarning {
    /// Sampling noise pushed `sigma_2` below zero; it was clamped.
    NegativeErrorVariance(f64),
    /// Recovered beta moments violate Hankel positivity.
    InconsistentMoments(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSolution {
    pub moments: MomentSet,
    pub warnings: Vec<MomentWarning>,
}

/// Solve the 2x2 systems in increasing order of `r`, with `m_1` taken from least squares.
pub fn solve_moments(rho: &RhoTable, k: usize, m1: f64) -> Result<MomentSolution> {
    if k == 0 {
        return Err(Error::Domain("K must be positive".into()));
    }
    let max_r = 2 * k - 1;
    if rho.max_r() < max_r || rho.max_s() < 2 * max_r {
        return Err(Error::Dimension(format!(
            "rho table too small for K={k}: need r<={max_r}, s<={}",
            2 * max_r
        )));
    }
    // index by order: m[0] = 1, sig[0] = 1, sig[1] = 0
    let mut m = vec![0.0; max_r + 1];
    let mut sig = vec![0.0; max_r + 1];
    m[0] = 1.0;
    m[1] = m1;
    sig[0] = 1.0;
    let mut warnings = Vec::new();

    for r in 2..=max_r {
        let a = rho.get(0, r);
        let c = rho.get(0, 2 * r);
        let det = c - a * a;
        if !(det.abs() > DET_TOL * c.abs()) {
            return Err(Error::NoVariation { r, det });
        }
        let mut rhs1 = rho.get(r, 0);
        let mut rhs2 = rho.get(r, r);
        for q in 2..r {
            let w = binom_f(r, q) * sig[q] * m[r - q];
            rhs1 -= w * rho.get(0, r - q);
            rhs2 -= w * rho.get(0, 2 * r - q);
        }
        // [a 1; c a] (m_r, sigma_r)' = (rhs1, rhs2)'
        m[r] = (a * rhs1 - rhs2) / (a * a - c);
        sig[r] = (a * rhs2 - c * rhs1) / (a * a - c);
        if r == 2 && sig[2] < 0.0 {
            warnings.push(MomentWarning::NegativeErrorVariance(sig[2]));
            sig[2] = 0.0;
        }
    }

    let moments = MomentSet::new(m[1..].to_vec(), sig[2..].to_vec(), k)?;
    if k >= 2 {
        let det = crate::catdist::hankel_det(&moments.m, k);
        let violations = moments.violations();
        if det < 0.0 || !violations.is_empty() {
            let mut msg = violations.join("; ");
            if det < 0.0 {
                if !msg.is_empty() {
                    msg.push_str("; ");
                }
                msg.push_str(&format!("Hankel determinant {det:e} < 0"));
            }
            warnings.push(MomentWarning::InconsistentMoments(msg));
        }
    }
    Ok(MomentSolution { moments, warnings })
}

/// `E(beta)^2 / E(beta^2)`; equals one exactly when beta is degenerate.
pub fn kappa_squared(m: &MomentSet) -> Result<f64> {
    if m.m.len() < 2 {
        return Err(Error::Domain("kappa^2 needs E(beta^2)".into()));
    }
    let m2 = m.m[1];
    if !(m2 > 0.0) {
        return Err(Error::Domain(format!("E(beta^2) = {m2} must be positive")));
    }
    Ok(m.m[0] * m.m[0] / m2)
}
