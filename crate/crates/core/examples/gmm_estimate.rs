//! Efficient GMM for (pi, b) with first-stage-corrected standard errors.

use ccrm::gmm::{default_s_order, estimate, GmmOptions};
use ccrm::mcsim::{generate, DgpKind, DgpSpec, Parametrization};

fn main() -> ccrm::Result<()> {
    let spec = DgpSpec::new(DgpKind::Baseline, Parametrization::High, 10_000)?;
    let sim = generate(&spec, 11);
    let est = estimate(&sim.sample, 2, default_s_order(2), &GmmOptions::default())?;
    let se = est.std_errors();
    for ((name, v), s) in est.param_names().iter().zip(est.params()).zip(se) {
        println!("{name:7} {v:8.4} ({s:.4})");
    }
    println!("objective {:.3e}, gradient norm {:.1e}", est.objective, est.gradient_norm);
    println!("flags {:?}", est.flags);
    Ok(())
}
