//! Smooth bijections from unconstrained coordinates onto the parameter space.
//!
//! * `pi`: softmax with category K as reference, `pi_k = e^{a_k} / (1 + sum_j e^{a_j})`.
//! * `b`: `b_1` free, `b_{k+1} = b_k + e^{d_k}`.
//! * `sigma_r = sigma_max_r * tanh(v_r)`.
//!
//! The constrained vector is `eta = (pi_1..pi_{K-1}, b_1..b_K, sigma_2..sigma_{2K-1})`.

use nalgebra::DMatrix;

/// Largest `|sigma_r| / sigma_max_r` mapped back through `atanh`.
const TANH_EDGE: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct SigmaBox {
    pub(crate) max: Vec<f64>,
}

impl SigmaBox {
    /// `sigma_max_r = 10 * scale^r`, `r = 2..=2K-1`.
    pub(crate) fn from_scale(scale: f64, r_max: usize) -> Self {
        let scale = if scale > 0.0 { scale } else { 1.0 };
        Self {
            max: (2..=r_max).map(|r| 10.0 * scale.powi(r as i32)).collect(),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.max.len()
    }

    pub(crate) fn to_sigma(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.max).map(|(v, m)| m * v.tanh()).collect()
    }

    pub(crate) fn from_sigma(&self, sigma: &[f64]) -> Vec<f64> {
        sigma
            .iter()
            .zip(&self.max)
            .map(|(s, m)| (s / m).clamp(-TANH_EDGE, TANH_EDGE).atanh())
            .collect()
    }

    /// `d sigma_r / d v_r`.
    pub(crate) fn derivative(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.max)
            .map(|(v, m)| {
                let t = v.tanh();
                m * (1.0 - t * t)
            })
            .collect()
    }

    /// True when some `|sigma_r|` sits within 1e-6 of its bound.
    pub(crate) fn at_bound(&self, sigma: &[f64]) -> bool {
        sigma.iter().zip(&self.max).any(|(s, m)| s.abs() >= m * (1.0 - 1e-6))
    }
}

/// Unconstrained coordinates `u = (a_1..a_{K-1}, b_1, d_1..d_{K-1}, v_2..v_{2K-1})`.
#[derive(Debug, Clone)]
pub(crate) struct ThetaReparam {
    pub(crate) k: usize,
    pub(crate) sigma: SigmaBox,
}

impl ThetaReparam {
    pub(crate) fn dim(&self) -> usize {
        2 * self.k - 1 + self.sigma.len()
    }

    /// `(pi, b, sigma)` with `pi` holding all K probabilities.
    pub(crate) fn to_params(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let k = self.k;
        let a = &u[..k - 1];
        // shift by the largest logit for overflow safety
        let amax = a.iter().copied().fold(0.0f64, f64::max);
        let mut pi: Vec<f64> = a.iter().map(|v| (v - amax).exp()).collect();
        pi.push((-amax).exp());
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= total);

        let mut b = vec![u[k - 1]];
        for d in &u[k..2 * k - 1] {
            let last = *b.last().unwrap();
            b.push(last + d.exp());
        }
        let sigma = self.sigma.to_sigma(&u[2 * k - 1..]);
        (pi, b, sigma)
    }

    /// Inverse of [`Self::to_params`]; requires `pi` interior and `b` strictly increasing.
    pub(crate) fn from_params(&self, pi: &[f64], b: &[f64], sigma: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut u = Vec::with_capacity(self.dim());
        let pk = pi[k - 1];
        u.extend(pi[..k - 1].iter().map(|p| (p / pk).ln()));
        u.push(b[0]);
        u.extend(b.windows(2).map(|w| (w[1] - w[0]).ln()));
        u.extend(self.sigma.from_sigma(sigma));
        u
    }

    /// `eta` in its reported order.
    pub(crate) fn eta(&self, u: &[f64]) -> Vec<f64> {
        let (pi, b, sigma) = self.to_params(u);
        let mut eta = pi[..self.k - 1].to_vec();
        eta.extend(b);
        eta.extend(sigma);
        eta
    }

    /// `d eta / d u`.
    pub(crate) fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        let k = self.k;
        let dim = self.dim();
        let (pi, _b, _) = self.to_params(u);
        let mut j = DMatrix::zeros(dim, dim);
        for r in 0..k - 1 {
            for c in 0..k - 1 {
                let delta = if r == c { 1.0 } else { 0.0 };
                j[(r, c)] = pi[r] * (delta - pi[c]);
            }
        }
        // b_i = b_1 + sum_{l < i} exp(d_l)
        for i in 0..k {
            j[(k - 1 + i, k - 1)] = 1.0;
            for l in 0..i {
                j[(k - 1 + i, k + l)] = u[k + l].exp();
            }
        }
        let ds = self.sigma.derivative(&u[2 * k - 1..]);
        for (q, d) in ds.iter().enumerate() {
            j[(2 * k - 1 + q, 2 * k - 1 + q)] = *d;
        }
        j
    }
}
