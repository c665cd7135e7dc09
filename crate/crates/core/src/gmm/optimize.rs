//! Derivative-free simplex search followed by a Levenberg-Marquardt polish.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub(crate) x: Vec<f64>,
    pub(crate) f: f64,
    pub(crate) evaluations: usize,
    pub(crate) converged: bool,
}

/// Nelder-Mead with dimension-adaptive coefficients. Non-finite values count as `+inf`.
pub(crate) fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    max_evals: usize,
    ftol: f64,
) -> Minimum {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    if n == 0 {
        let v = eval(x0, &mut evals);
        return Minimum {
            x: vec![],
            f: v,
            evaluations: evals,
            converged: true,
        };
    }
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

    let mut best = (x0.to_vec(), eval(x0, &mut evals));
    let mut converged = false;
    // one restart from the best point guards against premature collapse
    for _round in 0..2 {
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push(best.clone());
        for i in 0..n {
            let mut x = best.0.clone();
            x[i] += step * (1.0 + x[i].abs());
            let v = eval(&x, &mut evals);
            simplex.push((x, v));
        }
        converged = false;
        while evals < max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let fbest = simplex[0].1;
            let fworst = simplex[n].1;
            if fworst - fbest <= ftol * (1.0 + fbest.abs()) {
                converged = true;
                break;
            }
            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for (c, xi) in centroid.iter_mut().zip(x) {
                    *c += xi / nf;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };
            let xr = along(alpha);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(alpha * beta);
                let fe = eval(&xe, &mut evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < fworst {
                    let xc = along(alpha * gamma);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                } else {
                    let xc = along(-gamma);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                };
                if fc < fr.min(fworst) {
                    simplex[n] = (xc, fc);
                } else {
                    let x_best = simplex[0].0.clone();
                    for (x, v) in simplex.iter_mut().skip(1) {
                        for (xi, bi) in x.iter_mut().zip(&x_best) {
                            *xi = bi + delta * (*xi - bi);
                        }
                        *v = eval(x, &mut evals);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let improved = simplex[0].1 < best.1;
        let gain = best.1 - simplex[0].1;
        if improved {
            best = simplex[0].clone();
        }
        if !converged || gain <= ftol * (1.0 + best.1.abs()) {
            break;
        }
    }
    Minimum {
        x: best.0,
        f: best.1,
        evaluations: evals,
        converged,
    }
}

/// Levenberg-Marquardt on `|r(x)|^2`, given a residual-and-Jacobian callback.
/// Never returns a point worse than `x0`.
pub(crate) fn levenberg_marquardt(
    mut rj: impl FnMut(&[f64]) -> Option<(DVector<f64>, DMatrix<f64>)>,
    x0: &[f64],
    max_iter: usize,
) -> Minimum {
    let mut x = x0.to_vec();
    let Some((mut r, mut j)) = rj(&x) else {
        return Minimum {
            x,
            f: f64::INFINITY,
            evaluations: 1,
            converged: false,
        };
    };
    let mut f = r.norm_squared();
    let mut evals = 1;
    let mut lambda = 1e-3;
    let mut converged = false;
    for _ in 0..max_iter {
        let jtj = j.tr_mul(&j);
        let grad = j.tr_mul(&r);
        if grad.amax() <= 1e-15 * (1.0 + f) {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for d in 0..a.nrows() {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&grad)) else {
                lambda *= 4.0;
                continue;
            };
            let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - s).collect();
            evals += 1;
            if let Some((rn, jn)) = rj(&xn) {
                let fnew = rn.norm_squared();
                if fnew.is_finite() && fnew < f {
                    let gain = f - fnew;
                    x = xn;
                    r = rn;
                    j = jn;
                    f = fnew;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    if gain <= 1e-14 * f.max(1e-300) {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no descent available at any damping: a stationary point to working precision
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    Minimum {
        x,
        f,
        evaluations: evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn nelder_mead_finds_rosenbrock_minimum() {
        let m = nelder_mead(rosenbrock, &[-1.2, 1.0], 0.1, 10_000, 1e-14);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn nelder_mead_respects_budget() {
        let m = nelder_mead(rosenbrock, &[-1.2, 1.0], 0.1, 20, 0.0);
        assert!(!m.converged);
        assert!(m.evaluations <= 25);
        assert!(m.f <= rosenbrock(&[-1.2, 1.0]));
    }

    #[test]
    fn nelder_mead_treats_nan_as_infinite() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 2.0).powi(2) };
        let m = nelder_mead(f, &[0.5], 0.5, 1000, 1e-14);
        assert!((m.x[0] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn levenberg_marquardt_solves_rosenbrock_residuals() {
        let rj = |x: &[f64]| {
            let r = DVector::from_vec(vec![1.0 - x[0], 10.0 * (x[1] - x[0] * x[0])]);
            let j = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, -20.0 * x[0], 10.0]);
            Some((r, j))
        };
        let m = levenberg_marquardt(rj, &[-1.2, 1.0], 500);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-10 && (m.x[1] - 1.0).abs() < 1e-10);
    }
}
