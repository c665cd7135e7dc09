//! Closed-form moments of beta and of the error, then the homogeneity statistic.

use ccrm::mcsim::{generate, DgpKind, DgpSpec, Parametrization};
use ccrm::momsolve::{build_rho_table, kappa_squared, solve_moments};
use ccrm::ols::{detilde, estimate_phi};

fn main() -> ccrm::Result<()> {
    let spec = DgpSpec::new(DgpKind::Baseline, Parametrization::High, 100_000)?;
    let sim = generate(&spec, 3);
    let phi = estimate_phi(&sim.sample)?;
    let ytilde = detilde(&sim.sample, &phi.gamma())?;
    let rho = build_rho_table(ytilde.as_slice(), sim.sample.x().as_slice(), 2, 4)?;
    let sol = solve_moments(&rho, 2, phi.mean_beta())?;
    let truth = spec.theta();
    for r in 1..=3 {
        println!("E(beta^{r}) = {:.4}  truth {:.4}", sol.moments.m(r), truth.raw_moment(r as u32));
    }
    for r in 2..=3 {
        println!("E(u^{r})    = {:.4}", sol.moments.sigma(r));
    }
    println!("kappa^2    = {:.4}  (1 means no heterogeneity)", kappa_squared(&sol.moments)?);
    for w in &sol.warnings {
        println!("warning: {w:?}");
    }
    Ok(())
}
