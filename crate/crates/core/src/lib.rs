//! Estimation of linear regressions whose slope on a focal regressor is a random
//! coefficient with a finite categorical distribution.
//!
//! The model is `y_i = x_i beta_i + z_i' gamma + u_i` with `beta_i` independent of
//! `(x_i, u_i)` and taking `K` values `b_1 < ... < b_K` with probabilities `pi`.
//! The pipeline is
//!
//! 1. [`ols::estimate_phi`]: least squares for `(E(beta), gamma)`.
//! 2. [`momsolve::solve_moments`]: closed-form moments of beta and of the error.
//! 3. [`catdist::invert_general`]: moments to `(pi, b)`.
//! 4. [`gmm::estimate`]: efficient GMM on the moment conditions with a variance
//!    that accounts for the first-stage estimate of `gamma`.
//!
//! [`multivar`] extends identification to several random slopes, [`mcsim`] runs
//! the simulation designs and [`cli`] backs the `ccrm` binary.

pub mod catdist;
pub mod cli;
pub mod error;
pub mod gmm;
pub mod mcsim;
pub mod momsolve;
pub mod multivar;
pub mod numeric;
pub mod ols;
pub mod types;

pub use error::{Error, Result};
pub use types::{CategoricalDistribution, MomentSet, PhiEstimate, RegressionSample};
