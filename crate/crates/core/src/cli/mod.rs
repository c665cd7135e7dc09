//! Command-line front end behind the `ccrm` binary.
//!
//! Exit codes: 0 success, 1 input or usage error, 2 identification failure.

pub mod data;
pub mod report;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::catdist::invert_general;
use crate::error::{Error, Result};
use crate::gmm::{default_s_order, GmmOptions};
use crate::mcsim::{
    run_study, write_csv, write_power_csv, DgpKind, DgpSpec, Estimator, Parametrization, PowerGrid,
    StudyConfig,
};

pub use data::{read_sample, ColumnMap};
pub use report::{estimate_report, EstimateReport, InversionReport, Param};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_IDENTIFICATION: i32 = 2;

/// Replications run by `simulate --full`.
pub const FULL_REPLICATIONS: usize = 5_000;

#[derive(Debug, Parser)]
#[command(name = "ccrm", version, about = "Categorical random coefficient regressions")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the distribution of the focal slope from a CSV file.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo study.
    Simulate(SimulateArgs),
    /// Map raw moments E(beta^r), r = 1..2K-1, to (pi, b).
    InvertMoments(InvertArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub outcome: String,
    /// Regressor with the random coefficient.
    #[arg(long)]
    pub focal: String,
    /// Regressors with homogeneous coefficients.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Do not add a constant to the covariates.
    #[arg(long)]
    pub no_intercept: bool,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Highest power of x in the moment conditions, in [2K, 4K-2]; defaults to 2K.
    #[arg(long)]
    pub s_order: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DgpName {
    #[value(name = "baseline")]
    Baseline,
    #[value(name = "categorical_x")]
    CategoricalX,
    #[value(name = "categorical_u")]
    CategoricalU,
    #[value(name = "k3")]
    K3,
    /// Requires --alpha.
    #[value(name = "hetero")]
    Hetero,
    #[value(name = "cond_hetero")]
    CondHetero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VarName {
    #[value(name = "high")]
    High,
    #[value(name = "low")]
    Low,
    #[value(name = "var6.35")]
    Var635,
    #[value(name = "var18.95")]
    Var1895,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorName {
    #[value(name = "ols")]
    Ols,
    #[value(name = "gmm")]
    Gmm,
    #[value(name = "moment-gmm")]
    MomentGmm,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "baseline")]
    pub dgp: DgpName,
    #[arg(long = "var", value_enum, default_value = "high")]
    pub parametrization: VarName,
    #[arg(long, default_value_t = 1_000)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    /// Run the full 5,000 replications, overriding --reps.
    #[arg(long)]
    pub full: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "gmm")]
    pub estimator: EstimatorName,
    /// Categories fitted; defaults to the true number.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub s_order: Option<usize>,
    /// Heterogeneity degree for the hetero design.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Half width of the power grid around each true value.
    #[arg(long, requires = "power_points")]
    pub power_half_width: Option<f64>,
    #[arg(long, requires = "power_half_width")]
    pub power_points: Option<usize>,
    /// Power curves as CSV (parameter, theta_delta, rejection_rate).
    #[arg(long, requires = "power_half_width")]
    pub power_out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    #[arg(long)]
    pub k: usize,
    /// Comma-separated E(beta), E(beta^2), ..., E(beta^{2K-1}).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub moments: Vec<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Homogeneity { .. }
        | Error::ReducedRank { .. }
        | Error::NonRealSupport { .. }
        | Error::InfeasibleMoments(_)
        | Error::DegenerateSupport(_)
        | Error::InfeasibleJoint(_)
        | Error::RankDeficient(_)
        | Error::NotConverged { .. } => EXIT_IDENTIFICATION,
        _ => EXIT_INPUT,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&config) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(config: &RunConfig) -> Result<i32> {
    match &config.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::InvertMoments(a) => cmd_invert_moments(a),
    }
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            Error::Input(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_text(path: &Option<PathBuf>, text: &str) -> Result<()> {
    let mut w = sink(path)?;
    writeln!(w, "{text}")
        .and_then(|_| w.flush())
        .map_err(|e| Error::Input(format!("write failed: {e}")))
}

fn check_s_order(k: usize, s: Option<usize>) -> Result<usize> {
    if k == 0 {
        return Err(Error::Input("--k must be at least 1".into()));
    }
    match s {
        None => Ok(default_s_order(k)),
        Some(s) if (2 * k..=(4 * k - 2).max(2 * k)).contains(&s) => Ok(s),
        Some(s) => Err(Error::Input(format!(
            "--s-order {s} outside [{}, {}] for K={k}",
            2 * k,
            (4 * k - 2).max(2 * k)
        ))),
    }
}

pub fn cmd_estimate(a: &EstimateArgs) -> Result<i32> {
    let s = check_s_order(a.k, a.s_order)?;
    let map = ColumnMap {
        outcome: a.outcome.clone(),
        focal: a.focal.clone(),
        covariates: a.covariates.clone(),
        intercept: !a.no_intercept,
    };
    let file = File::open(&a.input)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", a.input.display())))?;
    let sample = read_sample(file, &map)?;
    let rep = estimate_report(&sample, &map.covariate_names(), a.k, s, &GmmOptions::default())?;
    match a.output.format {
        Format::Json => write_text(&a.output.out, &rep.to_json()?)?,
        Format::Csv => rep.write_csv(sink(&a.output.out)?)?,
    }
    if rep.identified() {
        Ok(EXIT_OK)
    } else {
        eprintln!("error: var(beta) is negligible; pi is not identified, reporting a point mass");
        Ok(EXIT_IDENTIFICATION)
    }
}

/// The study described by `simulate` flags.
pub fn study_from_args(a: &SimulateArgs) -> Result<(DgpSpec, StudyConfig)> {
    let kind = match a.dgp {
        DgpName::Baseline => DgpKind::Baseline,
        DgpName::CategoricalX => DgpKind::CategoricalX,
        DgpName::CategoricalU => DgpKind::CategoricalU,
        DgpName::K3 => DgpKind::K3,
        DgpName::CondHetero => DgpKind::CondHetero,
        DgpName::Hetero => DgpKind::Hetero(
            a.alpha
                .ok_or_else(|| Error::Input("--dgp hetero requires --alpha".into()))?,
        ),
    };
    let parametrization = match a.parametrization {
        VarName::High => Parametrization::High,
        VarName::Low => Parametrization::Low,
        VarName::Var635 => Parametrization::Var635,
        VarName::Var1895 => Parametrization::Var1895,
    };
    let spec = DgpSpec::new(kind, parametrization, a.n).map_err(|e| Error::Input(e.to_string()))?;
    let estimator = match a.estimator {
        EstimatorName::Ols => Estimator::Ols,
        EstimatorName::Gmm => Estimator::Gmm,
        EstimatorName::MomentGmm => Estimator::MomentGmm,
    };
    let reps = if a.full { FULL_REPLICATIONS } else { a.reps };
    if reps == 0 {
        return Err(Error::Input("--reps must be at least 1".into()));
    }
    let mut cfg = StudyConfig::new(estimator, reps, a.seed);
    let k = a.k.unwrap_or_else(|| spec.theta().k());
    if a.k.is_some() || a.s_order.is_some() {
        cfg.k = Some(k);
        cfg.s_order = Some(check_s_order(k, a.s_order)?);
    }
    if let (Some(half_width), Some(points)) = (a.power_half_width, a.power_points) {
        if !(half_width > 0.0) || points == 0 {
            return Err(Error::Input("power grid needs a positive width and points".into()));
        }
        cfg.power = Some(PowerGrid { half_width, points });
    }
    Ok((spec, cfg))
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    let (spec, cfg) = study_from_args(a)?;
    let rep = run_study(&spec, &cfg)?;
    match a.output.format {
        Format::Json => write_text(&a.output.out, &rep.to_json()?)?,
        Format::Csv => write_csv(std::slice::from_ref(&rep), sink(&a.output.out)?)?,
    }
    if let Some(path) = &a.power_out {
        write_power_csv(&rep, sink(&Some(path.clone()))?)?;
    }
    eprintln!(
        "{} replications ({} failed) in {:.2?}",
        rep.replications, rep.failures, rep.runtime
    );
    Ok(EXIT_OK)
}

pub fn cmd_invert_moments(a: &InvertArgs) -> Result<i32> {
    if a.k == 0 {
        return Err(Error::Input("--k must be at least 1".into()));
    }
    if a.moments.len() != 2 * a.k - 1 {
        return Err(Error::Input(format!(
            "--k {} needs {} moments, got {}",
            a.k,
            2 * a.k - 1,
            a.moments.len()
        )));
    }
    let theta = invert_general(&a.moments, a.k)?;
    let rep = InversionReport::new(&a.moments, &theta);
    match a.output.format {
        Format::Json => write_text(&a.output.out, &rep.to_json()?)?,
        Format::Csv => rep.write_csv(sink(&a.output.out)?)?,
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_simulate_flags() {
        let c = RunConfig::try_parse_from([
            "ccrm", "simulate", "--dgp", "categorical_u", "--var", "low", "--n", "500", "--reps",
            "3", "--seed", "9", "--estimator", "ols",
        ])
        .unwrap();
        let Command::Simulate(a) = c.command else { panic!() };
        let (spec, cfg) = study_from_args(&a).unwrap();
        assert_eq!(spec.kind, DgpKind::CategoricalU);
        assert_eq!(spec.parametrization, Parametrization::Low);
        assert_eq!((cfg.replications, cfg.seed, cfg.estimator), (3, 9, Estimator::Ols));
    }

    #[test]
    fn full_flag_overrides_reps() {
        let c = RunConfig::try_parse_from(["ccrm", "simulate", "--full", "--reps", "3"]).unwrap();
        let Command::Simulate(a) = c.command else { panic!() };
        assert_eq!(study_from_args(&a).unwrap().1.replications, FULL_REPLICATIONS);
    }

    #[test]
    fn hetero_requires_alpha() {
        let c = RunConfig::try_parse_from(["ccrm", "simulate", "--dgp", "hetero"]).unwrap();
        let Command::Simulate(a) = c.command else { panic!() };
        assert!(study_from_args(&a).is_err());
    }

    #[test]
    fn s_order_bounds() {
        assert_eq!(check_s_order(2, None).unwrap(), 4);
        assert_eq!(check_s_order(2, Some(6)).unwrap(), 6);
        assert!(check_s_order(2, Some(7)).is_err());
        assert!(check_s_order(2, Some(3)).is_err());
        assert!(check_s_order(0, None).is_err());
    }

    #[test]
    fn negative_moments_parse() {
        let c = RunConfig::try_parse_from(["ccrm", "invert-moments", "--k", "2", "--moments", "-1.5,2.5,-4.5"])
            .unwrap();
        let Command::InvertMoments(a) = c.command else { panic!() };
        assert_eq!(a.moments, vec![-1.5, 2.5, -4.5]);
    }

    #[test]
    fn error_classes() {
        assert_eq!(exit_code(&Error::Homogeneity { variance: 0.0 }), EXIT_IDENTIFICATION);
        assert_eq!(exit_code(&Error::NoVariation { r: 2, det: 0.0 }), EXIT_INPUT);
        assert_eq!(exit_code(&Error::Input("x".into())), EXIT_INPUT);
    }
}
