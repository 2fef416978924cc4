use thiserror::Error;

/// Errors produced by the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("compact subdomain at distance {delta} from the boundary is empty")]
    EmptySubdomain { delta: f64 },

    #[error("point {point:?} does not lie strictly inside the domain")]
    OutsideDomain { point: Vec<f64> },

    #[error("mollification radius {radius} is below half the grid spacing ({half_spacing})")]
    RadiusTooSmall { radius: f64, half_spacing: f64 },

    #[error("fields or measures live on different domains")]
    DomainMismatch,

    #[error("coefficient is not symmetric at node {node}")]
    NotSymmetric { node: usize },

    #[error("coefficient is not elliptic at node {node}: smallest eigenvalue {eigenvalue}")]
    NotElliptic { node: usize, eigenvalue: f64 },

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("linear solve missed its tolerance; residual history {residuals:?}")]
    LinearSolve { residuals: Vec<f64> },

    #[error(
        "bracket failed to contract within {iterations} iterations (last width {:e}); \
         reduce the ladder step",
        history.last().copied().unwrap_or(f64::NAN)
    )]
    BracketStall { iterations: usize, history: Vec<f64> },

    #[error("level n = {level} failed: {source}")]
    Level {
        level: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("field is non-positive ({value:e}) at node {node} inside a test support")]
    NonPositive { node: usize, value: f64 },

    #[error("p-energy descent stagnated after {} iterations", history.len())]
    DescentStagnation { history: Vec<f64> },

    #[error("shooting failed: {0}")]
    Shooting(String),

    #[error("expression `{expr}`: {message}")]
    Expression { expr: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
