//! Several random slopes: moments of `beta_i in R^p` from monomial moment systems,
//! marginal distributions per coordinate, and the joint table for `p = 2, K = 2`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::catdist::invert_general;
use crate::error::{Error, Result};
use crate::momsolve::{MomentWarning, DET_TOL};
use crate::numeric::{binom_f, binomial, multinomial};
use crate::ols::least_squares;
use crate::types::{CategoricalDistribution, PhiEstimate};

/// Largest number of random slopes.
pub const MAX_P: usize = 4;
/// Largest monomial degree, `2K - 1` for `K = 4`.
pub const MAX_DEGREE: u32 = 7;
/// Slack allowed outside `[0, 1]` before a joint probability is rejected.
pub const JOINT_SLACK: f64 = 1e-8;

/// Exponent vectors `q` with `|q| = r` in graded reverse-lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialBasis {
    pub p: usize,
    pub r: u32,
    pub exponents: Vec<Vec<u32>>,
}

pub fn monomial_basis(p: usize, r: u32) -> Result<MonomialBasis> {
    if p == 0 || p > MAX_P {
        return Err(Error::Domain(format!("p must be in 1..={MAX_P}, got {p}")));
    }
    if r > MAX_DEGREE {
        return Err(Error::Domain(format!("degree must be at most {MAX_DEGREE}, got {r}")));
    }
    let mut exponents = Vec::new();
    let mut q = vec![0u32; p];
    compositions(r, 0, &mut q, &mut exponents);
    // within a degree, grevlex ranks by the last exponent, then the one before it
    exponents.sort_by(|a, b| a.iter().rev().cmp(b.iter().rev()));
    Ok(MonomialBasis { p, r, exponents })
}

fn compositions(left: u32, j: usize, q: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if j + 1 == q.len() {
        q[j] = left;
        out.push(q.clone());
        return;
    }
    for v in 0..=left {
        q[j] = v;
        compositions(left - v, j + 1, q, out);
    }
}

impl MonomialBasis {
    /// `nu_r = C(r + p - 1, p - 1)`.
    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn position(&self, q: &[u32]) -> Option<usize> {
        self.exponents.iter().position(|e| e.as_slice() == q)
    }

    /// `tau_r(v)`: every degree-`r` monomial of `v`.
    pub fn tau(&self, v: &[f64]) -> DVector<f64> {
        debug_assert_eq!(v.len(), self.p);
        DVector::from_iterator(
            self.len(),
            self.exponents
                .iter()
                .map(|q| q.iter().zip(v).map(|(&e, x)| x.powi(e as i32)).product::<f64>()),
        )
    }
}

/// `Lambda_r`: multinomial coefficients on the diagonal.
pub fn lambda_matrix(basis: &MonomialBasis) -> DMatrix<f64> {
    let d: Vec<f64> = basis
        .exponents
        .iter()
        .map(|q| multinomial(q).expect("degree within range") as f64)
        .collect();
    DMatrix::from_diagonal(&DVector::from_vec(d))
}

/// Observations of `y_i = x_i' beta_i + z_i' gamma + u_i` with a `p`-column `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSample {
    y: DVector<f64>,
    x: DMatrix<f64>,
    z: DMatrix<f64>,
}

impl MultiSample {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, z: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::Dimension("sample must have at least one row".into()));
        }
        if x.nrows() != n || z.nrows() != n {
            return Err(Error::Dimension(format!(
                "row counts differ: y={n}, x={}, z={}",
                x.nrows(),
                z.nrows()
            )));
        }
        if x.ncols() == 0 || x.ncols() > MAX_P {
            return Err(Error::Domain(format!(
                "x must have 1..={MAX_P} columns, got {}",
                x.ncols()
            )));
        }
        if !y.iter().chain(x.iter()).chain(z.iter()).all(|v| v.is_finite()) {
            return Err(Error::Domain("sample contains non-finite entries".into()));
        }
        Ok(Self { y, x, z })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn pz(&self) -> usize {
        self.z.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    /// Rows `w_i = (x_i', z_i')'`.
    pub fn design(&self) -> DMatrix<f64> {
        let (p, pz) = (self.p(), self.pz());
        DMatrix::from_fn(self.n(), p + pz, |i, j| {
            if j < p {
                self.x[(i, j)]
            } else {
                self.z[(i, j - p)]
            }
        })
    }
}

/// Least squares for `phi = (E(beta)', gamma')'`.
pub fn estimate_phi_multi(sample: &MultiSample) -> Result<PhiEstimate> {
    least_squares(&sample.design(), sample.y())
}

/// `E[tau_r(beta)]` for `r = 1..=2K-1` and `sigma_r` for `r = 2..=2K-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiMoments {
    pub p: usize,
    pub k: usize,
    /// `bases[r - 1]` indexes `beta_moments[r - 1]`.
    pub bases: Vec<MonomialBasis>,
    pub beta_moments: Vec<DVector<f64>>,
    pub sigma: Vec<f64>,
    pub warnings: Vec<MomentWarning>,
}

impl MultiMoments {
    /// `E(prod_j beta_j^{q_j})` for `1 <= |q| <= 2K-1`.
    pub fn moment(&self, q: &[u32]) -> Option<f64> {
        if q.len() != self.p {
            return None;
        }
        let r = q.iter().sum::<u32>() as usize;
        if r == 0 {
            return Some(1.0);
        }
        let basis = self.bases.get(r - 1)?;
        basis.position(q).map(|i| self.beta_moments[r - 1][i])
    }

    /// `E(beta_j^r)` for `r = 1..=2K-1`.
    pub fn marginal_moments(&self, j: usize) -> Result<Vec<f64>> {
        if j >= self.p {
            return Err(Error::Dimension(format!("coordinate {j} of {}", self.p)));
        }
        Ok((1..2 * self.k as u32)
            .map(|r| {
                let mut q = vec![0; self.p];
                q[j] = r;
                self.moment(&q).expect("degree within range")
            })
            .collect())
    }

    /// `E(beta_i beta_j)`.
    pub fn cross_moment(&self, i: usize, j: usize) -> Result<f64> {
        if i >= self.p || j >= self.p || self.k < 2 {
            return Err(Error::Dimension(format!(
                "cross moment ({i}, {j}) needs i, j < {} and K >= 2",
                self.p
            )));
        }
        let mut q = vec![0; self.p];
        q[i] += 1;
        q[j] += 1;
        Ok(self.moment(&q).expect("degree two is present"))
    }

    /// `sigma_r` for `r >= 2`.
    pub fn sigma(&self, r: usize) -> f64 {
        self.sigma[r - 2]
    }
}

/// Sequentially solves the `(nu_r + 1)`-dimensional systems
/// `[rho_0r' Lambda_r, 1; Xi_rr Lambda_r, rho_0r] (E tau_r(beta), sigma_r)' = rhs`,
/// with `phi = (E(beta)', gamma')'` from the least-squares stage.
pub fn solve_moments_multi(sample: &MultiSample, phi: &DVector<f64>, k: usize) -> Result<MultiMoments> {
    let (n, p, pz) = (sample.n(), sample.p(), sample.pz());
    if k == 0 {
        return Err(Error::Domain("K must be positive".into()));
    }
    if phi.len() != p + pz {
        return Err(Error::Dimension(format!(
            "phi has length {}, expected {}",
            phi.len(),
            p + pz
        )));
    }
    let max_r = 2 * k - 1;
    if max_r as u32 > MAX_DEGREE {
        return Err(Error::Domain(format!("K={k} exceeds the supported degree")));
    }
    let bases: Vec<MonomialBasis> = (1..=max_r as u32)
        .map(|r| monomial_basis(p, r))
        .collect::<Result<_>>()?;
    let lambdas: Vec<DVector<f64>> = bases.iter().map(|b| lambda_matrix(b).diagonal()).collect();

    let gamma = phi.rows(p, pz);
    let ytilde: DVector<f64> = if pz == 0 {
        sample.y().clone()
    } else {
        sample.y() - sample.z() * gamma
    };
    // tau_r(x_i) for every observation and degree
    let taus: Vec<Vec<DVector<f64>>> = (0..n)
        .map(|i| {
            let xi: Vec<f64> = sample.x().row(i).iter().copied().collect();
            bases.iter().map(|b| b.tau(&xi)).collect()
        })
        .collect();
    let nf = n as f64;
    let rho0: Vec<DVector<f64>> = (0..max_r)
        .map(|d| taus.iter().fold(DVector::zeros(bases[d].len()), |acc, t| acc + &t[d]) / nf)
        .collect();
    // Xi_{r,t} = n^-1 sum tau_r(x_i) tau_t(x_i)'
    let xi = |r: usize, t: usize| -> DMatrix<f64> {
        let mut m = DMatrix::zeros(bases[r - 1].len(), bases[t - 1].len());
        for tau in &taus {
            m.ger(1.0 / nf, &tau[r - 1], &tau[t - 1], 1.0);
        }
        m
    };

    // mu[r] = E tau_r(beta); sig[r] = sigma_r with sig[0] = 1, sig[1] = 0
    let mut mu: Vec<DVector<f64>> = vec![DVector::from_element(1, 1.0)];
    mu.push(phi.rows(0, p).into_owned());
    let mut sig = vec![1.0, 0.0];
    let mut warnings = Vec::new();

    for r in 2..=max_r {
        let nu = bases[r - 1].len();
        let a = &rho0[r - 1];
        let xi_rr = xi(r, r);
        let centered = &xi_rr - a * a.transpose();
        let eig = centered.symmetric_eigenvalues();
        let emin = eig.min();
        if !(emin > DET_TOL * xi_rr.trace()) {
            return Err(Error::CollinearRegressors { r, eigenvalue: emin });
        }
        let yr: Vec<f64> = ytilde.iter().map(|v| v.powi(r as i32)).collect();
        let mut rhs1 = yr.iter().sum::<f64>() / nf;
        let mut rhs2 = taus
            .iter()
            .zip(&yr)
            .fold(DVector::zeros(nu), |acc, (t, y)| acc + &t[r - 1] * *y)
            / nf;
        for q in 2..r {
            let lm = lambdas[r - q - 1].component_mul(&mu[r - q]);
            let w = binom_f(r, q) * sig[q];
            rhs1 -= w * rho0[r - q - 1].dot(&lm);
            rhs2 -= xi(r, r - q) * lm * w;
        }
        let lam = &lambdas[r - 1];
        let mut m = DMatrix::zeros(nu + 1, nu + 1);
        for c in 0..nu {
            m[(0, c)] = a[c] * lam[c];
            for row in 0..nu {
                m[(row + 1, c)] = xi_rr[(row, c)] * lam[c];
            }
        }
        m[(0, nu)] = 1.0;
        for row in 0..nu {
            m[(row + 1, nu)] = a[row];
        }
        let mut b = DVector::zeros(nu + 1);
        b[0] = rhs1;
        b.rows_mut(1, nu).copy_from(&rhs2);
        let sol = m
            .lu()
            .solve(&b)
            .ok_or(Error::CollinearRegressors { r, eigenvalue: emin })?;
        mu.push(sol.rows(0, nu).into_owned());
        let mut s = sol[nu];
        if r == 2 && s < 0.0 {
            warnings.push(MomentWarning::NegativeErrorVariance(s));
            s = 0.0;
        }
        sig.push(s);
    }

    Ok(MultiMoments {
        p,
        k,
        bases,
        beta_moments: mu.split_off(1),
        sigma: sig.split_off(2),
        warnings,
    })
}

/// Least squares followed by [`solve_moments_multi`].
pub fn identify_multi(sample: &MultiSample, k: usize) -> Result<MultiMoments> {
    let phi = estimate_phi_multi(sample)?;
    solve_moments_multi(sample, &phi.phi, k)
}

/// `(lambda_j, b_j)` from `E(beta_j^r)`, `r = 1..=2K-1`.
pub fn marginal_distribution(moments: &[f64], k: usize) -> Result<CategoricalDistribution> {
    invert_general(moments, k)
}

/// Joint law of two binary coefficients, cells ordered `LL, LH, HL, HH`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution2x2 {
    pub pi: [f64; 4],
    pub b1: [f64; 2],
    pub b2: [f64; 2],
}

impl JointDistribution2x2 {
    pub fn new(pi: [f64; 4], b1: [f64; 2], b2: [f64; 2]) -> Result<Self> {
        if !(b1[0] < b1[1] && b2[0] < b2[1]) {
            return Err(Error::InvalidDistribution(format!(
                "support must be increasing: b1={b1:?}, b2={b2:?}"
            )));
        }
        let sum: f64 = pi.iter().sum();
        if pi.iter().any(|v| !(0.0..=1.0).contains(v)) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("pi={pi:?}")));
        }
        Ok(Self { pi, b1, b2 })
    }

    /// Cell `(k1, k2)` with `k = 0` for L and `1` for H.
    pub fn cell(&self, k1: usize, k2: usize) -> f64 {
        self.pi[2 * k1 + k2]
    }

    /// `E(beta_1^{q1} beta_2^{q2})`.
    pub fn moment(&self, q1: u32, q2: u32) -> f64 {
        let mut v = 0.0;
        for k1 in 0..2 {
            for k2 in 0..2 {
                v += self.cell(k1, k2) * self.b1[k1].powi(q1 as i32) * self.b2[k2].powi(q2 as i32);
            }
        }
        v
    }

    pub fn marginal1(&self) -> Result<CategoricalDistribution> {
        CategoricalDistribution::new(vec![self.pi[0] + self.pi[1], self.pi[2] + self.pi[3]], self.b1.to_vec())
    }

    pub fn marginal2(&self) -> Result<CategoricalDistribution> {
        CategoricalDistribution::new(vec![self.pi[0] + self.pi[2], self.pi[1] + self.pi[3]], self.b2.to_vec())
    }
}

/// Solves `B pi = (lambda_1L, lambda_1H, lambda_2L, E(beta_1 beta_2))'`.
/// Probabilities within [`JOINT_SLACK`] outside `[0, 1]` are clamped onto it.
pub fn joint_2x2(
    marginal1: &CategoricalDistribution,
    marginal2: &CategoricalDistribution,
    cross_moment: f64,
) -> Result<JointDistribution2x2> {
    if marginal1.k() != 2 || marginal2.k() != 2 {
        return Err(Error::Domain("joint recovery needs two-point marginals".into()));
    }
    let (b1, b2) = (marginal1.b(), marginal2.b());
    let b = DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 1.0, //
            1.0, 0.0, 1.0, 0.0, //
            b1[0] * b2[0], b1[0] * b2[1], b1[1] * b2[0], b1[1] * b2[1],
        ],
    );
    let rhs = DVector::from_vec(vec![
        marginal1.pi()[0],
        marginal1.pi()[1],
        marginal2.pi()[0],
        cross_moment,
    ]);
    let pi = b
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InfeasibleJoint("B is singular".into()))?;
    if pi.iter().any(|v| !(-JOINT_SLACK..=1.0 + JOINT_SLACK).contains(v)) {
        return Err(Error::InfeasibleJoint(format!(
            "probabilities {:?} leave [0, 1]",
            pi.as_slice()
        )));
    }
    let mut cells = [0.0; 4];
    for (c, v) in cells.iter_mut().zip(pi.iter()) {
        *c = v.clamp(0.0, 1.0);
    }
    let sum: f64 = cells.iter().sum();
    for c in &mut cells {
        *c /= sum;
    }
    JointDistribution2x2::new(cells, [b1[0], b1[1]], [b2[0], b2[1]])
}

/// Rows `(j, k)` map joint cells `(k_1, ..., k_p)` to the marginal `lambda_{jk}`.
pub fn marginal_constraint_matrix(p: usize, k: usize) -> DMatrix<f64> {
    let cells = k.pow(p as u32);
    DMatrix::from_fn(p * k, cells, |row, cell| {
        let (j, level) = (row / k, row % k);
        // digit j of the cell index in base K
        let digit = (cell / k.pow((p - 1 - j) as u32)) % k;
        if digit == level {
            1.0
        } else {
            0.0
        }
    })
}

/// Numerical rank of [`marginal_constraint_matrix`]; equals `pK - (p - 1)`.
pub fn marginal_constraint_rank(p: usize, k: usize) -> usize {
    marginal_constraint_matrix(p, k).rank(1e-10)
}

/// Usable equations for the joint probabilities against their count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointCounts {
    /// `sum_{r=1}^{2K-1} C(r + p - 1, p - 1) - pK`.
    pub equations: u64,
    /// `K^p - 1`.
    pub unknowns: u64,
}

impl JointCounts {
    pub fn underdetermined(&self) -> bool {
        self.equations < self.unknowns
    }
}

pub fn joint_counts(p: usize, k: usize) -> Result<JointCounts> {
    if p == 0 || k == 0 {
        return Err(Error::Domain("p and K must be positive".into()));
    }
    let overflow = || Error::Overflow(format!("counts for p={p}, K={k}"));
    let mut total: u64 = 0;
    for r in 1..2 * k {
        total = total
            .checked_add(binomial((r + p - 1) as u32, (p - 1) as u32)?)
            .ok_or_else(overflow)?;
    }
    let equations = total.checked_sub((p * k) as u64).ok_or_else(overflow)?;
    let unknowns = (k as u64)
        .checked_pow(p as u32)
        .ok_or_else(overflow)?
        - 1;
    Ok(JointCounts { equations, unknowns })
}
