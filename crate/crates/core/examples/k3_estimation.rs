//! Three categories: moment GMM, then the full estimator, at a large sample.

use ccrm::gmm::{default_s_order, estimate, estimate_moments, GmmOptions};
use ccrm::mcsim::{generate, DgpKind, DgpSpec, Parametrization};

fn main() -> ccrm::Result<()> {
    let spec = DgpSpec::new(DgpKind::K3, Parametrization::High, 100_000)?;
    let sim = generate(&spec, 5);
    let opts = GmmOptions::default();
    let s = default_s_order(3);

    let ms = estimate_moments(&sim.sample, 3, s, &opts)?;
    for ((name, v), se) in ms.param_names().iter().zip(ms.params()).zip(ms.std_errors()) {
        println!("{name:7} {v:9.4} ({se:.4})");
    }

    match estimate(&sim.sample, 3, s, &opts) {
        Ok(est) => {
            println!("pi = {:.3?}, b = {:.3?}", est.theta.pi(), est.theta.b());
            println!("flags {:?}", est.flags);
        }
        Err(e) => println!("full estimator: {e}"),
    }
    Ok(())
}
