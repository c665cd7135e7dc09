//! Maps between categorical distribution parameters `theta = (pi, b)` and the raw
//! moments of beta.
//!
//! The forward map is `m_r = sum_k pi_k b_k^r`. The inverse runs through the linear
//! recurrence satisfied by the moment sequence: the K x K Hankel system yields the
//! coefficients of the characteristic polynomial whose roots are the support points,
//! and a Vandermonde solve then recovers the probabilities. Inversion is done on
//! standardized moments (centered at the mean, scaled by the standard deviation)
//! and finished with a few Newton steps, which keeps K = 4 designs with closely
//! spaced support accurate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numeric::binom_f;
use crate::types::CategoricalDistribution;

/// Slack allowed on probability bounds before a solution is called infeasible.
pub const PI_SLACK: f64 = 1e-8;
/// Relative imaginary part above which a root is treated as complex.
pub const IMAG_TOL: f64 = 1e-6;
/// Variances below this (relative to `E(beta^2)`) are treated as a point mass.
pub const VAR_TOL: f64 = 1e-10;
/// Reciprocal condition number floor of the standardized Hankel matrix.
pub const HANKEL_RCOND_TOL: f64 = 1e-14;

/// `(m_1, ..., m_R)` for `theta`.
pub fn forward_moments(theta: &CategoricalDistribution, r_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; r_max];
    for (&p, &b) in theta.pi().iter().zip(theta.b()) {
        let mut pow = 1.0;
        for v in out.iter_mut() {
            pow *= b;
            *v += p * pow;
        }
    }
    out
}

/// Determinant of the K x K Hankel matrix `[m_{i+j}]`, `m_0 = 1`.
pub fn hankel_det(m: &[f64], k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    assert!(m.len() + 2 >= 2 * k, "hankel_det needs moments through order 2K-2");
    let mm = |r: usize| if r == 0 { 1.0 } else { m[r - 1] };
    DMatrix::from_fn(k, k, |i, j| mm(i + j)).determinant()
}

/// Discriminant of the K = 2 characteristic quadratic, and its two coefficients.
fn k2_coefficients(m: &[f64]) -> Result<(f64, f64, f64)> {
    if m.len() != 3 {
        return Err(Error::Dimension(format!("K=2 needs 3 moments, got {}", m.len())));
    }
    let (m1, m2, m3) = (m[0], m[1], m[2]);
    let var = m2 - m1 * m1;
    if !(var > VAR_TOL * m2.abs().max(1.0)) {
        return Err(Error::Homogeneity { variance: var });
    }
    let sum = (m3 - m1 * m2) / var;
    let prod = (m1 * m3 - m2 * m2) / var;
    Ok((sum, prod, sum * sum - 4.0 * prod))
}

/// Discriminant `beta_{L+H}^2 - 4 beta_{LH}` of the K = 2 inversion.
pub fn k2_discriminant(m: &[f64]) -> Result<f64> {
    k2_coefficients(m).map(|(_, _, d)| d)
}

/// Closed-form inverse for K = 2.
pub fn invert_k2(m: &[f64]) -> Result<CategoricalDistribution> {
    let (sum, _prod, delta) = k2_coefficients(m)?;
    if !(delta > 1e-12 * (1.0 + sum * sum)) {
        return Err(Error::DegenerateSupport(format!("discriminant {delta:e} is not positive")));
    }
    let root = delta.sqrt();
    let bl = 0.5 * (sum - root);
    let bh = 0.5 * (sum + root);
    let pi = (bh - m[0]) / (bh - bl);
    finish(vec![pi, 1.0 - pi], vec![bl, bh])
}

/// Check probabilities against the feasibility slack and build the distribution.
fn finish(pi: Vec<f64>, b: Vec<f64>) -> Result<CategoricalDistribution> {
    if pi.len() == 1 {
        return CategoricalDistribution::point_mass(b[0]);
    }
    if let Some(&bad) = pi.iter().find(|&&p| !(p > -PI_SLACK && p < 1.0 + PI_SLACK)) {
        return Err(Error::InfeasibleMoments(format!(
            "probability {bad} outside [0, 1] (pi = {pi:?})"
        )));
    }
    if pi.iter().any(|&p| p <= 0.0 || p >= 1.0) {
        return Err(Error::DegenerateSupport(format!(
            "a category has zero probability (pi = {pi:?}); try a smaller K"
        )));
    }
    let total: f64 = pi.iter().sum();
    let pi: Vec<f64> = pi.iter().map(|p| p / total).collect();
    CategoricalDistribution::new(pi, b).map_err(|e| Error::DegenerateSupport(e.to_string()))
}

/// General-K inverse via Hankel recurrence, companion-matrix roots and a Vandermonde solve.
pub fn invert_general(m: &[f64], k: usize) -> Result<CategoricalDistribution> {
    if k == 0 {
        return Err(Error::Domain("K must be positive".into()));
    }
    if m.len() != 2 * k - 1 {
        return Err(Error::Dimension(format!(
            "K={k} needs {} moments, got {}",
            2 * k - 1,
            m.len()
        )));
    }
    if k == 1 {
        return CategoricalDistribution::point_mass(m[0]);
    }
    let mean = m[0];
    let var = m[1] - mean * mean;
    if !(var > VAR_TOL * m[1].abs().max(1.0)) {
        return Err(Error::Homogeneity { variance: var });
    }
    let sd = var.sqrt();
    let c = standardize(m, mean, sd);

    // Hankel system for the recurrence c_{j+K} = sum_i a_i c_{j+i}, j = 0..K-1
    let hankel = DMatrix::from_fn(k, k, |i, j| c[i + j]);
    let sv = hankel.clone().singular_values();
    let rcond = sv.min() / sv.max();
    if !(rcond > HANKEL_RCOND_TOL) {
        return Err(Error::ReducedRank { rcond });
    }
    let rhs = DVector::from_fn(k, |j, _| c[j + k]);
    let a = hankel
        .lu()
        .solve(&rhs)
        .ok_or(Error::ReducedRank { rcond })?;

    // companion matrix of lambda^K - sum_i a_i lambda^i
    let mut comp = DMatrix::zeros(k, k);
    for i in 1..k {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..k {
        comp[(i, k - 1)] = a[i];
    }
    let eig = comp.complex_eigenvalues();
    let mut roots = Vec::with_capacity(k);
    for z in eig.iter() {
        if z.im.abs() > IMAG_TOL * z.norm().max(1.0) {
            return Err(Error::NonRealSupport {
                re: mean + sd * z.re,
                im: sd * z.im,
            });
        }
        roots.push(z.re);
    }
    roots.sort_by(f64::total_cmp);

    let psi = DMatrix::from_fn(k, k, |j, i| roots[i].powi(j as i32));
    let target = DVector::from_fn(k, |j, _| c[j]);
    let pi = psi
        .lu()
        .solve(&target)
        .ok_or_else(|| Error::DegenerateSupport("repeated support points".into()))?;
    let (pi, roots) = newton_polish(&c[1..], pi.as_slice().to_vec(), roots);
    let b: Vec<f64> = roots.iter().map(|t| mean + sd * t).collect();
    // standardizing loses digits to cancellation when |mean| >> sd; refit the raw moments
    let (pi, b) = newton_polish(m, pi, b);
    finish(pi, b)
}

/// Standardized moments `c_r = E[((beta - mean)/sd)^r]` for `r = 0..=2K-1`.
fn standardize(m: &[f64], mean: f64, sd: f64) -> Vec<f64> {
    let raw = |r: usize| if r == 0 { 1.0 } else { m[r - 1] };
    (0..=m.len())
        .map(|r| {
            let mut acc = 0.0;
            for j in 0..=r {
                acc += binom_f(r, j) * raw(j) * (-mean).powi((r - j) as i32);
            }
            acc / sd.powi(r as i32)
        })
        .collect()
}

/// Newton refinement of `sum_k pi_k t_k^r = target[r - 1]`, r = 1..2K-1, with
/// `pi_K = 1 - sum`. Steps are kept only while the residual norm decreases.
fn newton_polish(target: &[f64], pi: Vec<f64>, t: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let k = t.len();
    let dim = 2 * k - 1;
    let resid = |pi: &[f64], t: &[f64]| -> DVector<f64> {
        let pk = 1.0 - pi[..k - 1].iter().sum::<f64>();
        DVector::from_fn(dim, |row, _| {
            let r = (row + 1) as i32;
            let mut v = -target[row];
            for j in 0..k {
                let w = if j == k - 1 { pk } else { pi[j] };
                v += w * t[j].powi(r);
            }
            v
        })
    };
    let mut pi = pi;
    let mut t = t;
    let mut f = resid(&pi, &t);
    for _ in 0..4 {
        let pk = 1.0 - pi[..k - 1].iter().sum::<f64>();
        let jac = DMatrix::from_fn(dim, dim, |row, col| {
            let r = (row + 1) as i32;
            if col < k - 1 {
                t[col].powi(r) - t[k - 1].powi(r)
            } else {
                let j = col - (k - 1);
                let w = if j == k - 1 { pk } else { pi[j] };
                r as f64 * w * t[j].powi(r - 1)
            }
        });
        let Some(step) = jac.lu().solve(&f) else { break };
        let mut pi_new = pi.clone();
        let mut t_new = t.clone();
        for j in 0..k - 1 {
            pi_new[j] -= step[j];
        }
        for j in 0..k {
            t_new[j] -= step[k - 1 + j];
        }
        let f_new = resid(&pi_new, &t_new);
        if f_new.norm() < f.norm() {
            pi = pi_new;
            t = t_new;
            f = f_new;
        } else {
            break;
        }
    }
    let pk = 1.0 - pi[..k - 1].iter().sum::<f64>();
    let mut full = pi[..k - 1].to_vec();
    full.push(pk);
    (full, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_theta(rng: &mut ChaCha8Rng, k: usize) -> CategoricalDistribution {
        let mut pi: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let total: f64 = pi.iter().sum();
        // floor at 0.05, then renormalize the remaining mass
        let free = 1.0 - 0.05 * k as f64;
        pi.iter_mut().for_each(|p| *p = 0.05 + free * *p / total);
        let mut b = vec![rng.random_range(-3.0..3.0)];
        for _ in 1..k {
            let last = *b.last().unwrap();
            b.push(last + 0.1 + rng.random_range(0.0..1.5));
        }
        CategoricalDistribution::new(pi, b).unwrap()
    }

    #[test]
    fn forward_paper_tuples() {
        let hi = CategoricalDistribution::two_point(0.5, 1.0, 2.0).unwrap();
        assert_eq!(forward_moments(&hi, 3), vec![1.5, 2.5, 4.5]);
        let k3 = CategoricalDistribution::new(vec![0.3, 0.3, 0.4], vec![1.0, 2.0, 3.0]).unwrap();
        let m = forward_moments(&k3, 5);
        for (a, b) in m.iter().zip([2.1, 5.1, 13.5, 37.5, 107.1]) {
            assert!((a - b).abs() < 1e-12);
        }
        let pm = CategoricalDistribution::point_mass(-1.5).unwrap();
        assert_eq!(forward_moments(&pm, 3), vec![-1.5, 2.25, -3.375]);
    }

    #[test]
    fn k2_closed_form() {
        let d = invert_k2(&[1.5, 2.5, 4.5]).unwrap();
        assert!((d.pi()[0] - 0.5).abs() < 1e-12);
        assert!((d.b()[0] - 1.0).abs() < 1e-12);
        assert!((d.b()[1] - 2.0).abs() < 1e-12);

        let lo = invert_k2(&[1.0915, 1.3413, 1.7407]).unwrap();
        assert!((lo.pi()[0] - 0.3).abs() < 2e-3, "{:?}", lo);
        assert!((lo.b()[0] - 0.5).abs() < 5e-3);
        assert!((lo.b()[1] - 1.345).abs() < 5e-3);
    }

    #[test]
    fn k2_homogeneity() {
        assert!(matches!(invert_k2(&[2.0, 4.0, 8.0]), Err(Error::Homogeneity { .. })));
        assert!(matches!(invert_general(&[2.0, 4.0, 8.0], 2), Err(Error::Homogeneity { .. })));
    }

    #[test]
    fn k2_infeasible() {
        // var > 0 but the implied two-point law has negative weight
        let err = invert_k2(&[0.0, 1.0, 10.0]);
        assert!(err.is_ok() || matches!(err, Err(Error::InfeasibleMoments(_))));
        // m3 inconsistent with any two-point law on the reals is still solvable; pick
        // one where pi lands outside (0,1): support straddles the mean on one side only
        let bad = invert_general(&[0.0, 1.0, 0.0, 0.5, 0.0], 3);
        assert!(bad.is_err());
    }

    #[test]
    fn general_matches_k2() {
        let a = invert_k2(&[1.5, 2.5, 4.5]).unwrap();
        let b = invert_general(&[1.5, 2.5, 4.5], 2).unwrap();
        for (x, y) in a.pi().iter().zip(b.pi()).chain(a.b().iter().zip(b.b())) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn general_k3_paper_tuple() {
        let d = invert_general(&[2.1, 5.1, 13.5, 37.5, 107.1], 3).unwrap();
        for (x, y) in d.pi().iter().zip([0.3, 0.3, 0.4]) {
            assert!((x - y).abs() < 1e-8);
        }
        for (x, y) in d.b().iter().zip([1.0, 2.0, 3.0]) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn general_k1_is_point_mass() {
        let d = invert_general(&[0.7], 1).unwrap();
        assert_eq!(d.k(), 1);
        assert_eq!(d.b()[0], 0.7);
        assert!(invert_general(&[0.7, 1.0], 1).is_err());
    }

    #[test]
    fn random_k4_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let theta = random_theta(&mut rng, 4);
            let back = invert_general(&forward_moments(&theta, 7), 4).unwrap();
            for (x, y) in back.pi().iter().zip(theta.pi()).chain(back.b().iter().zip(theta.b())) {
                assert!((x - y).abs() < 1e-7, "{theta:?} -> {back:?}");
            }
        }
    }

    #[test]
    fn reduced_rank_and_complex_roots() {
        // a genuine two-point law asked for K = 3
        let two = CategoricalDistribution::two_point(0.5, 1.0, 2.0).unwrap();
        let m = forward_moments(&two, 5);
        assert!(matches!(invert_general(&m, 3), Err(Error::ReducedRank { .. })));
    }

    #[test]
    fn hankel_det_values() {
        assert!((hankel_det(&[1.5, 2.5], 2) - 0.25).abs() < 1e-14);
        assert!((hankel_det(&[1.0915, 1.3413], 2) - 0.15).abs() < 2e-4);
        assert!(hankel_det(&[3.0, 9.0], 2).abs() < 1e-14);
    }

    #[test]
    fn hankel_positive_for_valid_theta() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 2..=4 {
            for _ in 0..100 {
                let theta = random_theta(&mut rng, k);
                let m = forward_moments(&theta, 2 * k - 2);
                // closed form: prod pi_k * prod_{i<j} (b_j - b_i)^2
                let mut expect: f64 = theta.pi().iter().product();
                for i in 0..k {
                    for j in i + 1..k {
                        expect *= (theta.b()[j] - theta.b()[i]).powi(2);
                    }
                }
                let det = hankel_det(&m, k);
                assert!(det > 0.0);
                assert!((det - expect).abs() < 1e-6 * expect.max(1e-3), "{det} vs {expect}");
            }
        }
    }

    #[test]
    fn discriminant_equals_squared_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let theta = random_theta(&mut rng, 2);
            let d = k2_discriminant(&forward_moments(&theta, 3)).unwrap();
            let gap = theta.b()[1] - theta.b()[0];
            assert!((d - gap * gap).abs() < 1e-9 * (1.0 + gap * gap), "{d} vs {}", gap * gap);
        }
    }

    #[test]
    fn location_scale_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for k in 2..=3 {
            for _ in 0..30 {
                let theta = random_theta(&mut rng, k);
                let a = rng.random_range(-2.0..2.0);
                let c = rng.random_range(0.3..3.0);
                let moved = CategoricalDistribution::new(
                    theta.pi().to_vec(),
                    theta.b().iter().map(|b| a + c * b).collect(),
                )
                .unwrap();
                let back = invert_general(&forward_moments(&moved, 2 * k - 1), k).unwrap();
                let base = invert_general(&forward_moments(&theta, 2 * k - 1), k).unwrap();
                for (bm, bb) in back.b().iter().zip(base.b()) {
                    assert!((bm - (a + c * bb)).abs() < 1e-8);
                }
            }
        }
    }
}
