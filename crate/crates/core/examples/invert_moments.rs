//! Moments of beta to its categorical distribution, and back.

use ccrm::catdist::{forward_moments, invert_general, invert_k2};
use ccrm::CategoricalDistribution;

fn main() -> ccrm::Result<()> {
    // two categories have a closed form
    let theta = invert_k2(&[1.5, 2.5, 4.5])?;
    println!("K=2: pi = {:?}, b = {:?}", theta.pi(), theta.b());

    // larger K goes through the Hankel recurrence and a Vandermonde solve
    let theta = invert_general(&[2.1, 5.1, 13.5, 37.5, 107.1], 3)?;
    println!("K=3: pi = {:.6?}, b = {:.6?}", theta.pi(), theta.b());

    let truth = CategoricalDistribution::new(vec![0.1, 0.2, 0.3, 0.4], vec![-2.0, -0.5, 1.0, 4.0])?;
    let m = forward_moments(&truth, 7);
    let back = invert_general(&m, 4)?;
    println!("K=4 round trip: pi = {:.9?}, b = {:.9?}", back.pi(), back.b());

    // a point mass has no second category to find
    match invert_general(&[2.0, 4.0, 8.0], 2) {
        Err(e) => println!("E(beta^r) = 2^r: {e}"),
        Ok(t) => println!("unexpected: {t:?}"),
    }
    Ok(())
}
