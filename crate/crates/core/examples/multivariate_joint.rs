//! Two random slopes with two categories each: moments, marginals, joint table.

use ccrm::multivar::{identify_multi, joint_2x2, marginal_distribution, monomial_basis, MultiSample};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> ccrm::Result<()> {
    // cells LL, LH, HL, HH
    let pi = [0.3, 0.2, 0.1, 0.4];
    let (b1, b2) = ([1.0, 2.0], [-0.5, 1.5]);
    let n = 200_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut x = DMatrix::zeros(n, 2);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let (x1, x2): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        let draw: f64 = rng.random();
        let cell = pi.iter().scan(0.0, |acc, p| { *acc += p; Some(*acc) }).position(|c| draw < c).unwrap_or(3);
        let u: f64 = rng.sample(StandardNormal);
        x[(i, 0)] = 1.0 + x1;
        x[(i, 1)] = 0.5 * x1 + x2;
        y[i] = x[(i, 0)] * b1[cell / 2] + x[(i, 1)] * b2[cell % 2] + 0.25 + u;
    }
    let sample = MultiSample::new(y, x, DMatrix::from_element(n, 1, 1.0))?;

    println!("degree-2 monomials: {:?}", monomial_basis(2, 2)?.exponents);
    let mm = identify_multi(&sample, 2)?;
    let cross = mm.cross_moment(0, 1)?;
    println!("E(beta1 beta2) = {cross:.4}");
    let m1 = marginal_distribution(&mm.marginal_moments(0)?, 2)?;
    let m2 = marginal_distribution(&mm.marginal_moments(1)?, 2)?;
    println!("beta1: pi = {:.3?}, b = {:.3?}", m1.pi(), m1.b());
    println!("beta2: pi = {:.3?}, b = {:.3?}", m2.pi(), m2.b());
    match joint_2x2(&m1, &m2, cross) {
        Ok(j) => println!("joint (LL, LH, HL, HH) = {:.3?}, truth {pi:?}", j.pi),
        Err(e) => println!("joint table: {e}"),
    }
    Ok(())
}
