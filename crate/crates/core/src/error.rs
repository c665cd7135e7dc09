use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("arithmetic overflow: {0}")]
    Overflow(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("singular design: smallest eigenvalue of Q_ww is {eigenvalue:e}")]
    SingularDesign { eigenvalue: f64 },

    #[error("no variation in x^{r}: det of identification system is {det:e}")]
    NoVariation { r: usize, det: f64 },

    #[error("collinear regressors at degree {r}: smallest eigenvalue {eigenvalue:e}")]
    CollinearRegressors { r: usize, eigenvalue: f64 },

    #[error("homogeneous slope: var(beta) = {variance:e}, pi is not identified")]
    Homogeneity { variance: f64 },

    #[error("degenerate support: {0}")]
    DegenerateSupport(String),

    #[error("infeasible moments: {0}")]
    InfeasibleMoments(String),

    #[error("reduced rank Hankel matrix (reciprocal condition {rcond:e}); try a smaller K")]
    ReducedRank { rcond: f64 },

    #[error("non-real support point {re} + {im}i")]
    NonRealSupport { re: f64, im: f64 },

    #[error("infeasible joint distribution: {0}")]
    InfeasibleJoint(String),

    #[error("G'AG is singular: {0}")]
    RankDeficient(String),

    #[error("optimizer did not converge after {evaluations} evaluations (objective {objective:e})")]
    NotConverged {
        evaluations: usize,
        objective: f64,
        best: Vec<f64>,
    },

    #[error("input error: {0}")]
    Input(String),
}
