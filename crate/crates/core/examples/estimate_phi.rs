//! First stage: least squares for E(beta) and gamma with robust standard errors.

use ccrm::mcsim::{generate, DgpKind, DgpSpec, Parametrization};
use ccrm::ols::estimate_phi;

fn main() -> ccrm::Result<()> {
    let spec = DgpSpec::new(DgpKind::Baseline, Parametrization::High, 5_000)?;
    let sim = generate(&spec, 7);
    let est = estimate_phi(&sim.sample)?;
    let se = est.std_errors();
    for (j, name) in ["E(beta)", "alpha", "gamma1", "gamma2"].iter().enumerate() {
        println!("{name:8} {:8.4} ({:.4})  truth {}", est.phi[j], se[j], spec.phi()[j]);
    }
    Ok(())
}
