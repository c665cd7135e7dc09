//! Monte Carlo studies: simulation designs, replication loops and reports.
//!
//! Replication `i` of a study seeded with `s` draws from its own ChaCha stream
//! keyed by `(s, i)`, so results do not depend on thread count or scheduling, and
//! the first `R'` replications of a run coincide with a fresh `R'`-replication run.

pub mod dgp;
pub mod report;
pub mod study;

pub use dgp::{generate, generate_replication, DgpKind, DgpSpec, Parametrization, SimulatedSample};
pub use report::{write_csv, write_power_csv, McReport, ParameterRecord, PowerCurve, PowerPoint};
pub use study::{run_replications, run_study, summarize, Estimator, PowerGrid, StudyConfig};
