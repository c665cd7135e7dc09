//! A small simulation study with a power curve. Set CCRM_THREADS to cap threads.

use ccrm::mcsim::{
    run_study, write_csv, write_power_csv, DgpKind, DgpSpec, Estimator, Parametrization, PowerGrid,
    StudyConfig,
};

fn main() -> ccrm::Result<()> {
    let spec = DgpSpec::new(DgpKind::Baseline, Parametrization::High, 1_000)?;
    let mut cfg = StudyConfig::new(Estimator::Ols, 200, 1);
    cfg.power = Some(PowerGrid {
        half_width: 0.2,
        points: 9,
    });
    let rep = run_study(&spec, &cfg)?;
    println!("{} replications in {:.2?}", rep.replications, rep.runtime);
    write_csv(std::slice::from_ref(&rep), std::io::stdout())?;
    write_power_csv(&rep, std::io::stdout())?;
    Ok(())
}
