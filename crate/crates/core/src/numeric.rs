//! Small exact-arithmetic and moment helpers shared across the crate.

use crate::error::{Error, Result};

/// Largest `r` accepted by [`binomial`].
pub const MAX_BINOMIAL_ORDER: u32 = 64;

/// Binomial coefficient `C(r, q)` in exact integer arithmetic.
pub fn binomial(r: u32, q: u32) -> Result<u64> {
    if q > r {
        return Err(Error::Domain(format!("binomial({r}, {q}) requires q <= r")));
    }
    if r > MAX_BINOMIAL_ORDER {
        return Err(Error::Overflow(format!(
            "binomial order {r} exceeds {MAX_BINOMIAL_ORDER}"
        )));
    }
    let q = q.min(r - q) as u128;
    let r = r as u128;
    // acc * (r - q + i) is always divisible by i at step i
    let mut acc: u128 = 1;
    for i in 1..=q {
        acc = acc
            .checked_mul(r - q + i)
            .ok_or_else(|| Error::Overflow(format!("binomial({r}, {q})")))?
            / i;
    }
    u64::try_from(acc).map_err(|_| Error::Overflow(format!("binomial({r}, {q})")))
}

/// Binomial coefficient as `f64`, for small orders used inside moment recursions.
pub(crate) fn binom_f(r: usize, q: usize) -> f64 {
    binomial(r as u32, q as u32).expect("binomial order within range") as f64
}

/// Multinomial coefficient `r! / (q_1! ... q_p!)` with `r = sum(q)`.
pub fn multinomial(q: &[u32]) -> Result<u64> {
    let mut total: u32 = 0;
    let mut acc: u64 = 1;
    for &qj in q {
        total = total
            .checked_add(qj)
            .ok_or_else(|| Error::Overflow("multinomial order".into()))?;
        let c = binomial(total, qj)?;
        acc = acc
            .checked_mul(c)
            .ok_or_else(|| Error::Overflow(format!("multinomial({q:?})")))?;
    }
    Ok(acc)
}

/// `n^{-1} sum v_i^r`.
pub fn sample_moment(v: &[f64], r: u32) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::Domain("sample moment of an empty vector".into()));
    }
    let s: f64 = v.iter().map(|x| x.powi(r as i32)).sum();
    Ok(s / v.len() as f64)
}

/// Powers `v^0, v^1, ..., v^max` of a scalar.
pub(crate) fn powers(v: f64, max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max + 1);
    let mut p = 1.0;
    for _ in 0..=max {
        out.push(p);
        p *= v;
    }
    out
}
